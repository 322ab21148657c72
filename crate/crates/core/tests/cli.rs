use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_freqimpact"));
    c.env_remove("FREQIMPACT_CPUFREQ_ROOT");
    c
}

fn design() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/design.toml")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_reports_counts_and_writes_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let o = run(bin().args([
        "plan",
        "--design",
        s(&design()),
        "--workloads",
        "q1",
        "-o",
        s(&plan),
    ]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("90 measured runs, 45 warmups"));
    let text = fs::read_to_string(&plan).unwrap();
    assert!(text.contains("\"kind\": \"plan\""));
}

#[test]
fn invalid_design_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(design())
        .unwrap()
        .replace("cpu_freqs = [2.4, 3.6]", "cpu_freqs = [1.2, 2.4]");
    fs::write(&bad, text).unwrap();
    let o = run(bin().args(["plan", "--design", s(&bad), "--workloads", "q1"]));
    assert_eq!(code(&o), 1);
    assert!(
        stderr(&o).contains("frequency must exceed baseline"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn malformed_runs_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.csv");
    fs::write(
        &runs,
        "workload,mode,cpu_freq_ghz,memory_tier,disk_tier,network_gbps,replicate,runtime_s,warmup\n\
         q1,disk,1.2,DDR3-1600,HDD,1,1,103.5,\n\
         q1,disk,1.2,DDR3-1600,HDD,1,2,-5,\n",
    )
    .unwrap();
    let o = run(bin().args(["ingest", "--design", s(&design()), s(&runs)]));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("runs.csv:3"), "{}", stderr(&o));
}

#[test]
fn off_design_record_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.csv");
    fs::write(
        &runs,
        "workload,mode,cpu_freq_ghz,memory_tier,disk_tier,network_gbps,replicate,runtime_s,warmup\n\
         q1,disk,2.0,DDR3-1600,HDD,1,1,80,\n",
    )
    .unwrap();
    let o = run(bin().args(["ingest", "--design", s(&design()), s(&runs)]));
    assert_eq!(code(&o), 1);
    assert!(
        stderr(&o).contains("match no design cell"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn missing_required_cells_exit_with_incomplete_code() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.csv");
    let o = run(bin().args([
        "simulate",
        "--design",
        s(&design()),
        "--seed",
        "3",
        "-o",
        s(&runs),
    ]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let kept: Vec<String> = fs::read_to_string(&runs)
        .unwrap()
        .lines()
        .filter(|l| !l.contains(",SSD,"))
        .map(String::from)
        .collect();
    fs::write(&runs, kept.join("\n") + "\n").unwrap();

    let o = run(bin().args([
        "compute",
        "--design",
        s(&design()),
        "--records",
        s(&runs),
        "--format",
        "text",
    ]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("incomplete_matrix"));

    let o = run(bin().args([
        "compute",
        "--design",
        s(&design()),
        "--records",
        s(&runs),
        "--require",
        "dri",
    ]));
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("SSD"));
}

#[test]
fn config_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    fs::write(
        &cfg,
        format!("design_file = {:?}\nworkloads = [\"a\", \"b\"]\nindicators = [\"cri\"]\nmodes = [\"disk\"]\n", design()),
    )
    .unwrap();
    let o = run(bin().args(["--config", s(&cfg), "plan"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // 2 workloads x 3 frequencies x 3 replicates
    assert!(stderr(&o).contains("18 measured runs"), "{}", stderr(&o));

    let o = run(bin().args(["--config", s(&cfg), "plan", "--workloads", "a"]));
    assert!(stderr(&o).contains("9 measured runs"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    fs::write(&cfg, "workload = [\"a\"]\n").unwrap();
    let o = run(bin().args(["--config", s(&cfg), "plan", "--design", s(&design())]));
    assert_eq!(code(&o), 1);
}

fn fake_cpufreq(root: &Path) {
    for n in 0..2 {
        let d = root.join(format!("cpu{n}/cpufreq"));
        fs::create_dir_all(&d).unwrap();
        fs::write(
            d.join("scaling_available_frequencies"),
            "1200000 2400000 3600000\n",
        )
        .unwrap();
        fs::write(d.join("scaling_governor"), "ondemand\n").unwrap();
        fs::write(d.join("scaling_setspeed"), "<unsupported>\n").unwrap();
    }
}

#[test]
fn run_executes_commands_against_overridden_cpufreq_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("cpu");
    fake_cpufreq(&root);
    let marker = dir.path().join("ran.log");
    let cfg = dir.path().join("config.toml");
    fs::write(
        &cfg,
        format!(
            "design_file = {:?}\nworkloads = [\"q1\"]\nindicators = [\"cri\"]\nmodes = [\"disk\"]\n\
             cache_drop_command = \"true\"\n\n[commands]\nq1 = \"echo {{workload_id}} {{scheme.cpu_freq}} >> {}\"\n",
            design(),
            marker.display()
        ),
    )
    .unwrap();
    let plan = dir.path().join("plan.json");
    let out = dir.path().join("records.json");
    let o = run(bin().args(["--config", s(&cfg), "plan", "-o", s(&plan)]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(bin().env("FREQIMPACT_CPUFREQ_ROOT", &root).args([
        "--config",
        s(&cfg),
        "run",
        "--plan",
        s(&plan),
        "--gate",
        "non-interactive",
        "-o",
        s(&out),
    ]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let log = fs::read_to_string(&marker).unwrap();
    assert_eq!(log.lines().count(), 9);
    assert!(log.lines().last().unwrap().ends_with("3.6"));
    for n in 0..2 {
        let speed =
            fs::read_to_string(root.join(format!("cpu{n}/cpufreq/scaling_setspeed"))).unwrap();
        assert_eq!(speed.trim(), "3600000");
        let gov =
            fs::read_to_string(root.join(format!("cpu{n}/cpufreq/scaling_governor"))).unwrap();
        assert_eq!(gov.trim(), "userspace");
    }
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.matches("\"runtime_s\"").count(), 9);
}

#[test]
fn run_halts_at_hardware_change_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let o = run(bin().args([
        "plan",
        "--design",
        s(&design()),
        "--workloads",
        "q1",
        "--modes",
        "disk",
        "-o",
        s(&plan),
    ]));
    assert_eq!(code(&o), 0);
    let common = [
        "run",
        "--plan",
        s(&plan),
        "--freq-backend",
        "mock",
        "--mock-runtime",
        "5",
    ];
    let o = run(bin().args(common).args(["--gate", "non-interactive"]));
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    let cursor: usize = err
        .split("--resume ")
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(err.contains("needs operator confirmation"), "{err}");

    let o = run(bin()
        .args(common)
        .args(["--gate", "auto", "--resume", &cursor.to_string()]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn failing_workload_command_exits_with_execution_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    fs::write(
        &cfg,
        format!(
            "design_file = {:?}\nworkloads = [\"q1\"]\nindicators = [\"cri\"]\nmodes = [\"disk\"]\n\
             cache_drop_command = \"true\"\nfreq_backend = \"mock\"\n\n[commands]\nq1 = \"exit 4\"\n",
            design()
        ),
    )
    .unwrap();
    let plan = dir.path().join("plan.json");
    run(bin().args(["--config", s(&cfg), "plan", "-o", s(&plan)]));
    let o = run(bin().args([
        "--config",
        s(&cfg),
        "run",
        "--plan",
        s(&plan),
        "--gate",
        "auto",
    ]));
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("halted at step 1"), "{}", stderr(&o));
}

#[test]
fn fit_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.csv");
    let mut text = String::from("scale,machines,rt\n");
    for m in [1.0f64, 2.0, 4.0, 8.0, 16.0] {
        text.push_str(&format!(
            "100,{m},{}\n",
            10.0 * 100.0 / m + 5.0 * m.ln() + 2.0 * m + 1.0
        ));
    }
    fs::write(&obs, text).unwrap();
    let o = run(bin().args(["fit", "--observations", s(&obs), "--predict", "100:4"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rt = v["data"]["predictions"][0]["rt"].as_f64().unwrap();
    assert!((rt - 265.93).abs() < 0.005);

    fs::write(&obs, "scale,machines,rt\n1,1,1\n2,1,2\n3,1,3\n4,1,4\n").unwrap();
    let o = run(bin().args(["fit", "--observations", s(&obs)]));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("degenerate"));
}

#[test]
fn report_renders_formats_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference_averages.csv");
    let report = dir.path().join("report.json");
    let o = run(bin().args([
        "compute",
        "--design",
        s(&design()),
        "--records",
        s(&fixture),
        "-o",
        s(&report),
    ]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let text = run(bin().args(["report", "--report", s(&report)]));
    let text = String::from_utf8(text.stdout).unwrap();
    let avg = |prefix: &str| {
        text.lines()
            .find(|l| l.starts_with(prefix))
            .unwrap()
            .split_whitespace()
            .last()
            .unwrap()
            .to_string()
    };
    assert_eq!(avg("CRI       disk"), "0.61");
    assert_eq!(avg("MRI       memory"), "0.30");

    let csv = run(bin().args(["report", "--report", s(&report), "--format", "csv"]));
    let csv = String::from_utf8(csv.stdout).unwrap();
    assert!(csv.starts_with("workload,mode,cri,mri,dri,nri,bottleneck,flags\n"));
    assert_eq!(csv.lines().count(), 3);

    let plot = run(bin().args(["report", "--report", s(&report), "--plot", "variant"]));
    let v: serde_json::Value = serde_json::from_slice(&plot.stdout).unwrap();
    let labels: Vec<&str> = v["data"]["series"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["label"].as_str().unwrap())
        .collect();
    assert_eq!(
        labels,
        ["DH1", "DS1", "DH5", "DH10", "DS10", "MH1", "MS1", "MH5", "MH10", "MS10"]
    );
}

#[test]
fn utilization_feeds_diagnosis() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference_averages.csv");
    let util = dir.path().join("util.csv");
    let mut text = String::from(
        "workload,mode,cpu_freq_ghz,memory_tier,disk_tier,network_gbps,replicate,cpu_util_pct,disk_bw_util_pct,net_bw_util_pct\n",
    );
    for rep in 1..=3 {
        text.push_str(&format!(
            "reference,disk,1.2,DDR3-1600,HDD,1,{rep},17,10,5\n"
        ));
    }
    fs::write(&util, text).unwrap();
    let records = dir.path().join("records.json");
    let o = run(bin().args([
        "ingest",
        "--design",
        s(&design()),
        s(&fixture),
        "--utilization",
        s(&util),
        "-o",
        s(&records),
    ]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(bin().args([
        "compute",
        "--design",
        s(&design()),
        "--records",
        s(&records),
        "--format",
        "text",
    ]));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("LOW_CPUUTIL_HIGH_CRI"), "{text}");
    assert!(text.contains("LOW_DISKUTIL_HIGH_DRI"), "{text}");
}
