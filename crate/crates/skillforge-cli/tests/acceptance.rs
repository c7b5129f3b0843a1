//! Runs every acceptance criterion and prints one PASS/FAIL line for each.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{Isometry3, Translation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skillforge::agents::{analytic_controller, run_skill, EpisodeTrace, Frame, Gains, NoFeedback, RunOptions, SkillFamily};
use skillforge::agents::{Controller, SkillParameters};
use skillforge::cone::oracle::{oracle_classify_sampled, OracleVerdict};
use skillforge::cone::{canonical_contacts, classify, ContactPoint, ContactSet, ContactState, DofProfile};
use skillforge::pipeline::{bind_parameters, default_task, execute_sequence, load_task_sequence, BindOptions, ExecOptions};
use skillforge::reward::fixtures::check_all;
use skillforge::reward::{lookup, registry, Termination};
use skillforge::sim::{preset, Env, IdentityCarrier, Scene};
use skillforge::{Quat, Vec3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_skillforge")
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn setup(spec: &str, scene: Scene, axis_error_deg: f64) -> (Env, SkillParameters) {
    let env = Env::new(scene.clone()).unwrap().with_carrier(Box::new(IdentityCarrier));
    let model = default_task(spec, &scene).unwrap();
    let mut params = bind_parameters(&model, env.scene(), &env.pose(), &BindOptions::default()).unwrap();
    if axis_error_deg != 0.0 {
        let u = params.frame.u;
        let rot = Quat::from_axis_angle(&Unit::new_normalize(u), axis_error_deg.to_radians());
        params.frame = Frame::complete(&(rot * params.frame.s), &[u]).unwrap();
    }
    (env, params)
}

fn run(spec: &str, env: &mut Env, params: &SkillParameters, ctl: &mut dyn Controller, opts: RunOptions) -> EpisodeTrace {
    run_skill(lookup(spec).unwrap(), ctl, env, params, &opts).unwrap()
}

fn table_rows() -> Outcome {
    let start = Instant::now();
    let mut wrong = Vec::new();
    for state in ContactState::ALL {
        let set = canonical_contacts(state);
        let c = classify(&set).unwrap();
        if c.state != state || c.profile != state.profile() {
            wrong.push(format!("{state} -> {} {}", c.state, c.profile));
        }
    }
    let expected = [
        (ContactState::NC, ContactState::NR, DofProfile::new(3, 0, 0)),
        (ContactState::PC1, ContactState::RT1, DofProfile::new(2, 1, 0)),
        (ContactState::TR, ContactState::SP, DofProfile::new(2, 0, 1)),
        (ContactState::PC2, ContactState::RT2, DofProfile::new(1, 2, 0)),
        (ContactState::OT1, ContactState::OS1, DofProfile::new(1, 1, 1)),
        (ContactState::PR, ContactState::RV, DofProfile::new(1, 0, 2)),
        (ContactState::PCN, ContactState::RTN, DofProfile::new(0, 3, 0)),
        (ContactState::OT2, ContactState::OS2, DofProfile::new(0, 2, 1)),
        (ContactState::OP, ContactState::OR, DofProfile::new(0, 1, 2)),
        (ContactState::FT, ContactState::FR, DofProfile::new(0, 0, 3)),
    ];
    for (t, r, p) in expected {
        for s in [t, r] {
            if s.profile() != p {
                wrong.push(format!("{s} row is {} not {p}", s.profile()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        wrong.is_empty() && secs < 1.0,
        format!("20/20 rows{} in {secs:.3} s", if wrong.is_empty() { String::new() } else { format!(", wrong: {wrong:?}") }),
    )
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.2 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

const MIN_ANGLE: f64 = 5.0;

/// No two normals within `MIN_ANGLE` degrees of parallel unless they are an
/// exact antiparallel pair.
fn non_degenerate(ns: &[Vec3]) -> bool {
    let limit = MIN_ANGLE.to_radians().cos();
    for i in 0..ns.len() {
        for j in (i + 1)..ns.len() {
            if (ns[i] + ns[j]).norm() > 1e-12 && ns[i].dot(&ns[j]).abs() > limit {
                return false;
            }
        }
    }
    true
}

fn random_configuration(rng: &mut ChaCha8Rng, rotational: bool) -> ContactSet<f64> {
    loop {
        let count = rng.gen_range(1..=6usize);
        let mut effective: Vec<Vec3> = Vec::new();
        while effective.len() < count {
            let n = random_unit(rng);
            effective.push(n);
            if effective.len() < count && rng.gen_bool(0.4) {
                effective.push(-n);
            }
        }
        if !non_degenerate(&effective) {
            continue;
        }
        if !rotational {
            let contacts = effective
                .iter()
                .map(|n| ContactPoint::new(random_unit(rng) * 0.2, *n).unwrap())
                .collect();
            return ContactSet::translation(contacts);
        }
        let center = random_unit(rng) * 0.3;
        let contacts = effective
            .iter()
            .map(|m| {
                let r = {
                    let v = random_unit(rng);
                    (v - m * m.dot(&v)).normalize() * rng.gen_range(0.1..0.5)
                };
                let n = m.cross(&r).normalize();
                ContactPoint::new(center + r, n).unwrap()
            })
            .collect();
        return ContactSet::rotation(contacts, center);
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agree = 0;
    let mut notes = Vec::new();
    for i in 0..200 {
        let set = random_configuration(&mut rng, i % 4 == 3);
        let fast = classify(&set).unwrap();
        match oracle_classify_sampled(&set, 2562).unwrap() {
            OracleVerdict::Determinate(p) if p == fast.profile => agree += 1,
            v => notes.push(format!("case {i}: {} vs {v:?}", fast.profile)),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        agree == 200 && secs < 30.0,
        format!("{agree}/200 agree in {secs:.1} s{}", if notes.is_empty() { String::new() } else { format!(" {notes:?}") }),
    )
}

fn reward_fidelity() -> Outcome {
    let checks = check_all();
    let good = checks.iter().filter(|c| c.matches()).count();
    let n = registry().len();
    outcome(good == n && checks.len() == n, format!("{good}/{n} match"))
}

fn place_detection() -> Outcome {
    let scene = preset("tabletop").unwrap();
    let lift = 0.06;
    let p = scene.object.pose.position + Vec3::new(0.0, 0.0, lift);
    let (mut env, mut params) = setup("NC-PC-a", scene.with_object_position(p), 0.0);
    params.thresholds.zero = 3.0;
    let step = env.config().step_size;
    // Independent geometry: the bottom face starts `lift` above the table and
    // drops one step per tick.
    let first_contact = (lift / step - 1e-9).ceil() as usize;
    let mut ctl = analytic_controller(SkillFamily::Position, &Gains::default());
    let trace = run("NC-PC-a", &mut env, &params, ctl.as_mut(), RunOptions::default());
    let depth = env.max_penetration();
    let pass =
        trace.termination == Termination::Success && trace.steps().abs_diff(first_contact) <= 1 && depth <= 0.005;
    outcome(
        pass,
        format!(
            "{} after {} steps, first contact at step {first_contact}, penetration {:.2} mm",
            trace.termination,
            trace.steps(),
            depth * 1e3
        ),
    )
}

fn lateral(f: &Vec3) -> f64 {
    (f.y * f.y + f.z * f.z).sqrt()
}

fn drawer_compliance() -> Outcome {
    let collision = 30.0;
    let (mut env, params) = setup("PR-OP", preset("drawer").unwrap(), 10.0);
    let mut ctl = analytic_controller(SkillFamily::Direction, &Gains::default());
    let trace = run("PR-OP", &mut env, &params, ctl.as_mut(), RunOptions::default());
    let max_lat = trace.rows.iter().map(|r| lateral(&r.force)).fold(0.0, f64::max);
    let end_x = env.pose().position.x;
    let feedback_ok = trace.termination == Termination::Success && max_lat < collision;

    // Straight line along the mistaken axis, judged over the full horizon.
    let (mut env, mut params) = setup("PR-OP", preset("drawer").unwrap(), 10.0);
    params.horizon = 40;
    let base = run("PR-OP", &mut env, &params, &mut NoFeedback, RunOptions::fixed_horizon());
    let violation = base.rows.iter().find(|r| lateral(&r.force) > collision);
    let baseline_ok = match violation {
        Some(r) => r.pose.position.x > 2e-3,
        None => false,
    };
    outcome(
        feedback_ok && baseline_ok,
        format!(
            "feedback: {} steps={} max lateral {max_lat:.1} N, end x {:.4} m; no feedback: {}",
            trace.termination,
            trace.steps(),
            end_x,
            match violation {
                Some(r) => format!(
                    "lateral {:.1} N at step {} with the drawer still {:.1} mm open",
                    lateral(&r.force),
                    r.step,
                    r.pose.position.x * 1e3
                ),
                None => "never exceeded delta-collision".into(),
            }
        ),
    )
}

fn wipe_regulation() -> Outcome {
    let mut scene = preset("whiteboard").unwrap();
    // Board turned 2 degrees about the vertical through the eraser's contact.
    let pivot = Vector3::new(0.0, 0.1, 0.3);
    let rot = Quat::from_axis_angle(&Vector3::z_axis(), 2f64.to_radians());
    let iso = Isometry3::from_parts(Translation3::from(pivot - rot * pivot), rot);
    scene.surfaces = scene.surfaces.iter().map(|s| s.transformed(&iso)).collect();
    let true_normal = scene.surfaces[0].plane_normal().unwrap();
    let (mut env, mut params) = setup("PC1-PC1", scene, 0.0);
    params.frame = Frame::complete(&Vec3::y(), &[Vec3::x()]).unwrap();
    let mut ctl = analytic_controller(SkillFamily::Wipe, &Gains::default());
    let trace = run("PC1-PC1", &mut env, &params, ctl.as_mut(), RunOptions::default());

    // Rows carry the force against the free-space baseline.
    let settle = 10;
    let total = trace.rows.len();
    let mut in_band = 0;
    let mut detached = false;
    let mut counted = 0;
    for (k, r) in trace.rows.iter().enumerate() {
        let f = r.force.dot(&true_normal);
        if f <= 0.0 {
            detached = true;
        }
        if k >= settle {
            counted += 1;
            if (f - 10.0).abs() <= 3.0 {
                in_band += 1;
            }
        }
    }
    let share = in_band as f64 / counted.max(1) as f64;
    outcome(
        total >= 100 && share >= 0.9 && !detached && trace.termination != Termination::PenaltyFailure,
        format!(
            "{} over {total} steps, {in_band}/{counted} post-settling steps within 10 N ± 30%{}",
            trace.termination,
            if detached { ", detached" } else { "" }
        ),
    )
}

fn door_arc() -> Outcome {
    let initial = 10.0;
    let (mut env, params) = setup("OR-RV", preset("door").unwrap(), initial);
    let hinge = env.scene().hinge.unwrap();
    let mut ctl = analytic_controller(SkillFamily::Direction, &Gains::default());
    let trace = run("OR-RV", &mut env, &params, ctl.as_mut(), RunOptions::default());
    let radius = hinge.radius_of(&trace.start_pose().position);
    let deviation = trace
        .rows
        .iter()
        .map(|r| (hinge.radius_of(&r.pose.position) - radius).abs())
        .fold(0.0, f64::max);
    let angle_error = |r: &skillforge::agents::TraceRow| {
        let tangent = hinge.axis.cross(&(r.pose.position - hinge.point)).normalize();
        r.direction.angle(&tangent).to_degrees()
    };
    let n = trace.rows.len();
    let first = angle_error(&trace.rows[0]);
    let last_quarter = trace.rows[n - n / 4..].iter().map(angle_error).fold(0.0, f64::max);
    outcome(
        deviation < 0.02 && last_quarter < first,
        format!(
            "{} steps={}, radial deviation {:.1} mm, direction error {first:.2} deg at start, at most {last_quarter:.2} deg over the final quarter",
            trace.termination,
            trace.steps(),
            deviation * 1e3
        ),
    )
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(bin()).args(args).current_dir(workspace()).output().expect("binary runs")
}

fn read_curve(path: &Path) -> Vec<(usize, f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let v: Vec<&str> = l.split(',').collect();
            (v[0].parse().unwrap(), v[1].parse().unwrap(), v[2].parse().unwrap())
        })
        .collect()
}

fn training(dir: &Path) -> Outcome {
    let out = dir.join("train-a");
    let o = cli(&["train", "PR-PR", "--steps", "50000", "--seed", "0", "--out", out.to_str().unwrap()]);
    if !o.status.success() {
        return outcome(false, format!("train exited with {}: {}", o.status, String::from_utf8_lossy(&o.stderr)));
    }
    let curve = read_curve(&out.join("curve.csv"));
    let (first, last) = (curve[0].1, curve[curve.len() - 1].1);
    let envelope = curve.windows(2).all(|w| w[1].2 >= w[0].2);
    let improved = last >= first + 0.5 * (0.0 - first);
    outcome(
        improved && envelope,
        format!(
            "{} iterations, mean reward {first:.1} -> {last:.1} ({:.0}% of the gap to 0 closed), best-so-far envelope {}; curve at {}",
            curve.len(),
            100.0 * (last - first) / (0.0 - first),
            if envelope { "monotone" } else { "NOT monotone" },
            out.join("curve.csv").display()
        ),
    )
}

fn demos(dir: &Path) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["place_on_plate", "shelf", "throw_away", "open_fridge"] {
        let path = workspace().join("demos").join(format!("{name}.json"));
        let seq = load_task_sequence(&path).unwrap();
        let mut env = Env::new(preset(seq.scene.as_deref().unwrap()).unwrap())
            .unwrap()
            .with_carrier(Box::new(IdentityCarrier));
        let report = execute_sequence(&seq, &mut env, &ExecOptions::default()).unwrap();
        let chained = report.traces.windows(2).all(|w| w[0].end_pose() == w[1].start_pose());
        let out = dir.join(format!("exec-{name}"));
        let o = cli(&["exec", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap_or_default()).unwrap_or_default();
        let cli_ok = o.status.success() && summary["success"] == serde_json::Value::Bool(true);
        let ok = report.success() && chained && cli_ok;
        pass &= ok;
        notes.push(format!(
            "{name}: {} skills {}{}",
            report.traces.len(),
            if report.success() { "all success" } else { "FAILED" },
            if chained { "" } else { ", chain broken" }
        ));
    }
    outcome(pass, notes.join("; "))
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = fs::read_dir(a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in &names {
        let x = fs::read(a.join(n)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(n)).map_err(|e| format!("{}: {e}", n.to_string_lossy()))?;
        if x != y {
            return Err(format!("{} differs", n.to_string_lossy()));
        }
    }
    Ok(names.len())
}

fn determinism(dir: &Path) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let runs: [(&str, Vec<&str>); 3] = [
        ("run", vec!["run", "whiteboard", "PC1-PC1", "--normal-noise", "2", "--jitter", "0.0005", "--seed", "5"]),
        ("train", vec!["train", "PR-PR", "--steps", "50000", "--seed", "0"]),
        ("exec", vec!["exec", "demos/shelf.json", "--jitter", "0.0002", "--seed", "3"]),
    ];
    for (name, args) in runs {
        let mut outs = Vec::new();
        for k in 0..2 {
            let out = dir.join(format!("det-{name}-{k}"));
            let mut a = args.clone();
            let o = out.to_str().unwrap().to_string();
            a.extend(["--out", &o]);
            let status = cli(&a).status;
            if status.code() == Some(2) {
                pass = false;
                notes.push(format!("{name}: usage error"));
            }
            outs.push(out);
        }
        match same_files(&outs[0], &outs[1]) {
            Ok(n) => notes.push(format!("{name}: {n} files identical")),
            Err(e) => {
                pass = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }
    // The training run of criterion 8 must match as well.
    match same_files(&dir.join("train-a"), &dir.join("det-train-0")) {
        Ok(_) => {}
        Err(e) => {
            pass = false;
            notes.push(format!("train vs criterion 8: {e}"));
        }
    }
    outcome(pass, notes.join("; "))
}

fn main() {
    // `cargo test -- --list` and friends pass flags we do not use.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("table rows", Box::new(table_rows)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("reward compiler", Box::new(reward_fidelity)),
        ("place detection", Box::new(place_detection)),
        ("drawer compliance", Box::new(drawer_compliance)),
        ("wipe force regulation", Box::new(wipe_regulation)),
        ("door arc", Box::new(door_arc)),
        ("training improvement", Box::new(|| training(dir.path()))),
        ("end-to-end demos", Box::new(|| demos(dir.path()))),
        ("determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
