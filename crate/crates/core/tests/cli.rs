use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use spp_remote::config::RunConfig;
use spp_remote::dynamics::simulate;
use spp_remote::noise::{WeibullParams, WrappedCauchyParams};
use spp_remote::scheme::SchemeTable;
use spp_remote::State;

const SMALL: &str = "seed = 5\nhorizon = 3\ncosts = [10.0, 12.0, 8.0]\n[solver]\ngrid = { position = 21, heading = 8 }\nparticles = 512\nbank_size = 128\n[simulate]\nepisodes = 25\n";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spp-remote"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Data rows of a table, skipping the embedded configuration.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn embedded_config(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("# ").or_else(|| (l == "#").then_some("")))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[test]
fn missing_track_exits_with_io_code() {
    let out = bin(&["fit", "--track", "/nonexistent/track.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/track.csv"));
}

#[test]
fn bad_config_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "horizon = 3\ncosts = [1.0]\n");
    let out = bin(&["solve", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn toy_solve_is_quick_monotone_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", "horizon = 3\ncosts = 10.0\n");
    let first = dir.path().join("first");
    let t = Instant::now();
    run_ok(&["solve", "--config", s(&cfg), "--out", s(&first)]);
    assert!(t.elapsed().as_secs() < 60);

    let log = rows(&first.join("convergence.csv"));
    for w in log.windows(2) {
        if w[0][0] == w[1][0] {
            let (a, b): (f64, f64) = (w[0][3].parse().unwrap(), w[1][3].parse().unwrap());
            assert!(b <= a + 1e-9, "G rose from {a} to {b}");
        }
    }
    let cprime = rows(&first.join("cprime.csv"));
    assert_eq!(cprime.len(), 3);
    assert_eq!(cprime[2][2], "10");

    // Replay from the configuration embedded in the scheme file.
    let (table, embedded) = SchemeTable::read_from(std::fs::File::open(first.join("scheme.bin")).unwrap()).unwrap();
    assert_eq!(table.horizon(), 3);
    let other = tempfile::tempdir().unwrap();
    let replay_cfg = write(other.path(), "replay.toml", &embedded);
    let second = other.path().join("second");
    run_ok(&["solve", "--config", s(&replay_cfg), "--out", s(&second)]);
    for name in ["scheme.bin", "convergence.csv", "cprime.csv"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name} differs"
        );
    }
    // The CSV embeds the same configuration as the scheme file.
    assert_eq!(embedded_config(&first.join("cprime.csv")), embedded);
}

#[test]
fn evaluate_outputs_and_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL);
    let out = dir.path().join("out");
    run_ok(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    run_ok(&["evaluate", "--config", s(&cfg), "--out", s(&out)]);

    let steps = rows(&out.join("steps.csv"));
    assert_eq!(steps.len(), 25 * 3);
    let mut sent = 0;
    for r in &steps {
        if r[3] == "1" {
            sent += 1;
            assert_eq!(r[2], "0");
        }
    }
    assert!(sent > 0 && sent < steps.len());
    let summary = rows(&out.join("summary.csv"));
    assert_eq!(summary.len(), 25);
    for r in &summary {
        let f = |i: usize| r[i].parse::<f64>().unwrap();
        assert!((f(6) - f(4) - f(5)).abs() <= 1e-12 * f(6).max(1.0));
    }

    // Replaying from the embedded configuration reproduces the reports.
    let replay_cfg = write(dir.path(), "replay.toml", &embedded_config(&out.join("steps.csv")));
    let again = dir.path().join("again");
    run_ok(&["evaluate", "--config", s(&replay_cfg), "--out", s(&again)]);
    for name in ["steps.csv", "summary.csv"] {
        assert_eq!(
            std::fs::read(out.join(name)).unwrap(),
            std::fs::read(again.join(name)).unwrap()
        );
    }

    // Without a config, the scheme's own configuration applies.
    let implicit = dir.path().join("implicit");
    run_ok(&[
        "evaluate",
        "--scheme",
        s(&out.join("scheme.bin")),
        "--out",
        s(&implicit),
    ]);
    assert_eq!(rows(&out.join("summary.csv")), rows(&implicit.join("summary.csv")));

    let always = dir.path().join("always");
    run_ok(&[
        "evaluate",
        "--config",
        s(&cfg),
        "--kind",
        "transmit-always",
        "--out",
        s(&always),
    ]);
    for r in rows(&always.join("summary.csv")) {
        assert_eq!(r[6], "30");
        assert_eq!(r[2], "3");
    }
    let never = dir.path().join("never");
    run_ok(&[
        "evaluate",
        "--config",
        s(&cfg),
        "--kind",
        "transmit-never",
        "--out",
        s(&never),
    ]);
    for r in rows(&never.join("summary.csv")) {
        assert_eq!(r[2], "0");
        assert_eq!(r[5], "0");
    }
}

#[test]
fn horizon_mismatch_exits_with_code_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL);
    let out = dir.path().join("out");
    run_ok(&["solve", "--config", s(&cfg), "--out", s(&out)]);

    let track = write(dir.path(), "track.csv", "t_s,x_m,y_m\n0,0,0\n1,1,0\n2,2,1\n");
    let res = bin(&["evaluate", "--out", s(&out), "--track", s(&track)]);
    assert_eq!(res.status.code(), Some(5), "{}", String::from_utf8_lossy(&res.stderr));

    let longer = write(
        dir.path(),
        "longer.toml",
        &SMALL.replace("horizon = 3\ncosts = [10.0, 12.0, 8.0]", "horizon = 4\ncosts = 10.0"),
    );
    let res = bin(&[
        "evaluate",
        "--config",
        s(&longer),
        "--scheme",
        s(&out.join("scheme.bin")),
        "--out",
        s(&out),
    ]);
    assert_eq!(res.status.code(), Some(5));

    let fits = write(dir.path(), "fits.csv", "t_s,x_m,y_m\n0,0,0\n1,1,0\n2,2,1\n3,2,3\n");
    run_ok(&[
        "evaluate",
        "--config",
        s(&cfg),
        "--scheme",
        s(&out.join("scheme.bin")),
        "--track",
        s(&fits),
        "--out",
        s(&dir.path().join("t")),
    ]);
    let steps = rows(&dir.path().join("t").join("steps.csv"));
    assert_eq!(steps.len(), 3);
}

#[test]
fn fit_output_feeds_solve_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let model = spp_remote::dynamics::SppModel::new(
        WeibullParams::new(1.35, 4.66).unwrap(),
        WrappedCauchyParams::new(0.65, 0.0).unwrap(),
    );
    let path = simulate(&model, State::ORIGIN, 3000, 12).unwrap();
    let mut text = String::from("t_s,x_m,y_m\n");
    for (i, x) in path.iter().enumerate() {
        text.push_str(&format!("{i},{},{}\n", x.p1, x.p2));
    }
    let track = write(dir.path(), "track.csv", &text);
    let base = write(dir.path(), "base.toml", SMALL);
    let fitted = dir.path().join("fitted");
    run_ok(&["fit", "--config", s(&base), "--track", s(&track), "--out", s(&fitted)]);

    let model_file = fitted.join("model.toml");
    let cfg = RunConfig::load(&model_file).unwrap().resolved().unwrap();
    let m = cfg.model().unwrap();
    assert!((m.speed.shape() / 1.35 - 1.0).abs() < 0.1);
    assert!((m.turn.concentration() - 0.65).abs() < 0.05);
    assert_eq!(cfg.fit.as_ref().unwrap().points, 3001);

    let again = dir.path().join("again");
    run_ok(&["fit", "--config", s(&model_file), "--out", s(&again)]);
    assert_eq!(
        std::fs::read(&model_file).unwrap(),
        std::fs::read(again.join("model.toml")).unwrap()
    );

    let solved = dir.path().join("solved");
    run_ok(&["solve", "--config", s(&model_file), "--out", s(&solved)]);
    let (table, _) = SchemeTable::read_from(std::fs::File::open(solved.join("scheme.bin")).unwrap()).unwrap();
    assert_eq!(table.model(), &m);
}

#[test]
fn simulate_writes_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL);
    let out = dir.path().join("sim");
    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&out), "--seed", "77"]);
    let table = rows(&out.join("trajectories.csv"));
    assert_eq!(table.len(), 25 * 4);
    assert_eq!(table[0][3..], ["0", "0", "0"]);
    assert!(embedded_config(&out.join("trajectories.csv")).contains("seed = 77"));
}
