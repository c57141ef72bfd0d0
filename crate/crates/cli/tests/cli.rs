use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::thread;

use mocha_core::report::{read_pool, read_trace};

fn mocha(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mocha"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn mocha")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_report_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mocha(
        tmp.path(),
        &["run", "--budget=120", "--minibatch_size", "2", "--output_dir=out"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("out");
    for f in [
        "pool.json",
        "trace.csv",
        "front.csv",
        "tree.dot",
        "config.toml",
        "skills/0.SKILL.md",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let echo = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("budget = 120"), "{echo}");
    assert!(echo.contains("minibatch_size = 2"));

    let pool = read_pool(&out.join("pool.json")).unwrap();
    let front = pool.front().unwrap();
    let line = stdout(&o);
    assert!(line.contains(&format!("front_size={}", front.size())), "{line}");
    assert!(line.contains(&format!("hv={:.6}", front.hypervolume)), "{line}");
    assert!(
        line.contains(&format!("consumed={}/120", pool.ledger.consumed)),
        "{line}"
    );
    assert!(line.contains("complete=true"));
    assert!(!read_trace(&out.join("trace.csv")).unwrap().is_empty());
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mocha(tmp.path(), &["run", "--budget=10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("minibatch_size"), "{}", stderr(&o));

    let o = mocha(tmp.path(), &["run", "--minibatch_size=2", "--budget=0"]);
    assert_eq!(o.status.code(), Some(1));

    let o = mocha(tmp.path(), &["run", "--minibatch_size=2", "--tau0=-1"]);
    assert_eq!(o.status.code(), Some(1));

    let o = mocha(
        tmp.path(),
        &[
            "run",
            "--minibatch_size=2",
            "--task.kind=benchmark",
            "--benchmark=fever",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("user-provided dataset"), "{}", stderr(&o));

    let o = mocha(tmp.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    fs::write(tmp.path().join("bad.toml"), "[run]\nbudget = 10\nbogus = 1\n").unwrap();
    let o = mocha(tmp.path(), &["run", "-c", "bad.toml", "--minibatch_size=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["run", "--budget=30", "--minibatch_size=2", "--output_dir=out"];
    assert!(mocha(tmp.path(), &args).status.success());
    assert_eq!(mocha(tmp.path(), &args).status.code(), Some(1));
    let mut forced = args.to_vec();
    forced.insert(1, "--force");
    assert!(mocha(tmp.path(), &forced).status.success());
}

const SEED_SKILL: &str = "---
name: probe
description: A probe skill whose description is deliberately a little long.
---

## Steps
Do the thing.
";

const SCRIPT: &str = r#"{
  "train_size": 4,
  "validation_size": 4,
  "seed": {"train": 0.5, "validation": 0.5},
  "steps": [
    {
      "doc_patch": {"description": "A probe skill."},
      "per_example_scores": {"train": 0.75, "validation": [1.0, 1.0, 0.5, 0.5]}
    }
  ]
}"#;

#[test]
fn scripted_task_from_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_dir = tmp.path().join("cfg");
    fs::create_dir(&cfg_dir).unwrap();
    fs::write(cfg_dir.join("seed.md"), SEED_SKILL).unwrap();
    fs::write(cfg_dir.join("script.json"), SCRIPT).unwrap();
    fs::write(
        cfg_dir.join("run.toml"),
        r#"output_dir = "greedy-run"
seed_skill = "seed.md"

[run]
budget = 12
minibatch_size = 2

[strategy]
kind = "greedy"

[task]
kind = "scripted"
script = "script.json"
"#,
    )
    .unwrap();
    let o = mocha(tmp.path(), &["run", "-c", "cfg/run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pool = read_pool(&tmp.path().join("greedy-run/pool.json")).unwrap();
    assert_eq!(pool.pool.len(), 2);
    assert_eq!(pool.pool[1].doc.description, "A probe skill.");
    assert_eq!(pool.pool[1].validation().get(0), 0.75);
    // seed 4, one iteration 2*2 + 4
    assert_eq!(pool.ledger.consumed, 12);
}

#[test]
fn report_aggregates_and_skips_corrupt_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for (strategy, seed) in [("mocha", 1), ("greedy", 0), ("mocha", 0)] {
        let o = mocha(
            tmp.path(),
            &[
                "run",
                "--budget=100",
                "--minibatch_size=2",
                &format!("--strategy.kind={strategy}"),
                &format!("--run.seed={seed}"),
                &format!("--output_dir=runs/{strategy}-{seed}"),
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    fs::create_dir(tmp.path().join("runs/broken")).unwrap();
    fs::write(tmp.path().join("runs/broken/pool.json"), "{ not json").unwrap();

    let o = mocha(tmp.path(), &["report", "runs", "-o", "summary.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("skipping"), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(
        rows[0],
        ["strategy", "seed", "best_correctness", "hv", "front_size"]
    );
    let keys: Vec<(&str, &str)> = rows[1..].iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(
        keys,
        [
            ("greedy", "0"),
            ("mocha", "0"),
            ("mocha", "1"),
            ("mocha", "mean"),
            ("mocha", "std")
        ]
    );

    let hv = |name: &str| {
        read_pool(&tmp.path().join(format!("runs/{name}/pool.json")))
            .unwrap()
            .front()
            .unwrap()
            .hypervolume
    };
    let (a, b) = (hv("mocha-0"), hv("mocha-1"));
    let mean: f64 = rows[4][3].parse().unwrap();
    let std: f64 = rows[5][3].parse().unwrap();
    assert!((mean - (a + b) / 2.0).abs() < 1e-6);
    // sample std of two values is |a - b| / sqrt(2)
    assert!((std - (a - b).abs() / 2f64.sqrt()).abs() < 1e-6);
}

#[test]
fn front_and_validate_skill() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(mocha(
        tmp.path(),
        &["run", "--budget=100", "--minibatch_size=2", "--output_dir=out"]
    )
    .status
    .success());
    let o = mocha(tmp.path(), &["front", "out"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let (head, csv) = text.split_once('\n').unwrap();
    assert!(head.starts_with("# front_size="));
    assert_eq!(csv, fs::read_to_string(tmp.path().join("out/front.csv")).unwrap());

    let o = mocha(tmp.path(), &["validate-skill", "out/skills/0.SKILL.md"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "description: PASS (38/1,024 chars)\nbody: PASS (67/5,000 chars)\n"
    );
    let o = mocha(
        tmp.path(),
        &["validate-skill", "out/skills/0.SKILL.md", "--body-limit=50"],
    );
    assert!(stdout(&o).contains("body: FAIL (67/50 chars)"), "{}", stdout(&o));

    let o = mocha(tmp.path(), &["front", "nowhere"]);
    assert_eq!(o.status.code(), Some(1));
}

/// Answers every request on a loopback port with `status` and `body`.
fn serve(status: &'static str, body: String) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut buf = vec![0; len];
            let _ = reader.read_exact(&mut buf);
            let resp = format!(
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    format!("http://{addr}/v1/chat/completions")
}

#[test]
fn llm_mutator_success() {
    let skill =
        "---\nname: fever_verification\ndescription: Verify claims.\n---\n\n## Steps\nCheck evidence.\n";
    let body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": format!("Here:\n```markdown\n{skill}```\n")}}]
    })
    .to_string();
    let endpoint = serve("200 OK", body);
    let tmp = tempfile::tempdir().unwrap();
    let o = mocha(
        tmp.path(),
        &[
            "run",
            "--task.kind=tradeoff",
            "--task.mutator=llm",
            &format!("--llm.endpoint={endpoint}"),
            "--budget=30",
            "--minibatch_size=2",
            "--output_dir=out",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = read_trace(&tmp.path().join("out/trace.csv")).unwrap();
    assert!(!trace.is_empty());
    assert!(trace.iter().all(|r| r.decision != "mutator_failure"));
}

#[test]
fn llm_failures_leave_partial_report_and_exit_two() {
    let endpoint = serve("500 Internal Server Error", "{}".into());
    let tmp = tempfile::tempdir().unwrap();
    let o = mocha(
        tmp.path(),
        &[
            "run",
            "--task.kind=tradeoff",
            "--task.mutator=llm",
            &format!("--llm.endpoint={endpoint}"),
            "--max_attempts=1",
            "--backoff_ms=0",
            "--max_consecutive_failures=2",
            "--budget=100",
            "--minibatch_size=2",
            "--output_dir=out",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let pool = read_pool(&tmp.path().join("out/pool.json")).unwrap();
    assert!(!pool.complete);
    assert!(pool.error.is_some());
    assert_eq!(pool.pool.len(), 1);
    let trace = read_trace(&tmp.path().join("out/trace.csv")).unwrap();
    assert_eq!(trace.len(), 2);
    assert!(trace
        .iter()
        .all(|r| r.decision == "mutator_failure" && r.charged == 2));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_dir = tmp.path().join("cfg");
    fs::create_dir(&cfg_dir).unwrap();
    fs::write(cfg_dir.join("seed.md"), SEED_SKILL).unwrap();
    fs::write(
        cfg_dir.join("run.toml"),
        "output_dir = \"first\"\nseed_skill = \"seed.md\"\n[run]\nbudget = 150\nminibatch_size = 2\n[task]\nkind = \"tradeoff\"\n",
    )
    .unwrap();
    assert!(mocha(tmp.path(), &["run", "-c", "cfg/run.toml", "--seed", "7"])
        .status
        .success());
    let o = mocha(
        tmp.path(),
        &["run", "-c", "first/config.toml", "--output_dir=second"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["trace.csv", "pool.json"] {
        let a = fs::read(tmp.path().join("first").join(f)).unwrap();
        let b = fs::read(tmp.path().join("second").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn greedy_stays_on_the_seed_while_mocha_grows_a_front() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mocha(
        tmp.path(),
        &[
            "run",
            "--budget=200",
            "--minibatch_size=2",
            "--strategy.kind=greedy",
            "--output_dir=g",
        ],
    );
    let line = stdout(&o);
    assert!(
        line.contains("front_size=1 ") && line.contains("commits=0 "),
        "{line}"
    );
    let o = mocha(
        tmp.path(),
        &["run", "--budget=200", "--minibatch_size=2", "--output_dir=m"],
    );
    let line = stdout(&o);
    let size: usize = line
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("front_size="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(size >= 2, "{line}");
}

#[test]
fn bundled_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            mocha_cli::config::RunConfig::load(Some(&path), &[])
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
