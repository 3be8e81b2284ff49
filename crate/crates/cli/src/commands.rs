use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use koopeig::dynamics::{generate_dataset, GenerateOptions, InputPolicy, Rk4, Sampler};
use koopeig::mpc::closed_loop;
use koopeig::predictor::{
    evaluate_table, learn, rmse_error, Control, EigMode, ErrorTable, LinearPredictor,
};
use koopeig::TrajectoryDataset;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Plan;
use crate::error::CliError;
use crate::svg::{render, Panel, Series};

pub const UNCONTROLLED_CSV: &str = "data/uncontrolled.csv";
pub const CONTROLLED_CSV: &str = "data/controlled.csv";
pub const MANIFEST: &str = "manifest.json";
pub const PREDICTOR: &str = "predictor.json";
pub const LEARN_REPORT: &str = "learn_report.json";

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(koopeig::Error::from)?;
    s.push('\n');
    write(path, s.as_bytes())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> koopeig::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Git object id of a blob, over SHA-256 (`sha256(b"blob <len>\0" ++ content)`).
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

#[derive(Serialize)]
struct ManifestFile {
    path: String,
    trajectories: usize,
    samples_per_trajectory: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    version: u32,
    system: String,
    seed: u64,
    ts: f64,
    files: Vec<ManifestFile>,
}

fn simulate_datasets(
    plan: &Plan,
) -> Result<(TrajectoryDataset, Option<TrajectoryDataset>), CliError> {
    let d = &plan.data;
    let opts = |duration, policy| GenerateOptions {
        n_traj: d.n_traj,
        duration,
        ts: d.ts,
        policy,
        seed: d.seed,
    };
    let ds = generate_dataset(&plan.vf, &d.sampler, &opts(d.duration, InputPolicy::None))
        .map_err(|e| e.at("generate"))?;
    let ds_c = match d.controlled {
        None => None,
        Some((duration, policy)) => {
            let same = Sampler::List {
                points: ds.initial_conditions(),
            };
            Some(
                generate_dataset(&plan.vf, &same, &opts(duration, policy))
                    .map_err(|e| e.at("generate controlled"))?,
            )
        }
    };
    Ok((ds, ds_c))
}

pub fn generate(plan: &Plan) -> Result<(), CliError> {
    let (ds, ds_c) = simulate_datasets(plan)?;
    let mut files = Vec::new();
    for (name, set) in [
        (UNCONTROLLED_CSV, Some(&ds)),
        (CONTROLLED_CSV, ds_c.as_ref()),
    ] {
        let Some(set) = set else { continue };
        let bytes = csv_bytes(|b| set.write_csv(b))?;
        write(&plan.out_dir.join(name), &bytes)?;
        files.push(ManifestFile {
            path: name.into(),
            trajectories: set.n_traj(),
            samples_per_trajectory: set.n_steps() + 1,
            sha256: blob_hash(&bytes),
        });
    }
    for f in &files {
        println!(
            "{}: {} trajectories x {} samples, sha256 {}",
            f.path, f.trajectories, f.samples_per_trajectory, f.sha256
        );
    }
    let manifest = Manifest {
        version: crate::config::SCHEMA_VERSION,
        system: plan.system.clone(),
        seed: plan.data.seed,
        ts: plan.data.ts,
        files,
    };
    write_json(&plan.out_dir.join(MANIFEST), &manifest)
}

fn read_dataset(path: &Path) -> Result<TrajectoryDataset, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(TrajectoryDataset::read_csv(BufReader::new(f))
        .map_err(|e| e.at(path.display().to_string()))?)
}

fn check_dims(plan: &Plan, ds: &TrajectoryDataset, path: &Path) -> Result<(), CliError> {
    let n = plan.vf.state_dim();
    if ds.state_dim() != n {
        return Err(CliError::Config(format!(
            "{}: state dimension {} does not match the {n}-dimensional system",
            path.display(),
            ds.state_dim()
        )));
    }
    if (ds.ts() - plan.data.ts).abs() > 1e-12 * plan.data.ts {
        return Err(CliError::Config(format!(
            "{}: sampling period {} differs from data.ts = {}",
            path.display(),
            ds.ts(),
            plan.data.ts
        )));
    }
    Ok(())
}

pub fn learn_cmd(plan: &Plan, data_dir: Option<&Path>) -> Result<(), CliError> {
    let dir = data_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| plan.out_dir.clone());
    let upath = dir.join(UNCONTROLLED_CSV);
    let ds = read_dataset(&upath)?;
    check_dims(plan, &ds, &upath)?;
    let cpath = dir.join(CONTROLLED_CSV);
    let ds_c = if plan.learn.fit_b && cpath.exists() {
        let d = read_dataset(&cpath)?;
        check_dims(plan, &d, &cpath)?;
        Some(d)
    } else {
        None
    };
    let (pred, report) = learn(&ds, ds_c.as_ref(), &plan.observable, &plan.learn)?;
    for (i, c) in report.components.iter().enumerate() {
        println!(
            "output {i}: objective {:.6e} -> {:.6e} (relative {:.3e}), {} eigenvalues",
            c.initial_objective,
            c.objective,
            c.objective / c.target_norm2.max(f64::MIN_POSITIVE),
            c.eigenvalues.len()
        );
    }
    write(&plan.out_dir.join(PREDICTOR), pred.to_json()?.as_bytes())?;
    write_json(&plan.out_dir.join(LEARN_REPORT), &report)
}

fn load_predictor(plan: &Plan, path: Option<&Path>) -> Result<LinearPredictor, CliError> {
    let p: PathBuf = path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| plan.out_dir.join(PREDICTOR));
    let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    let pred = LinearPredictor::from_json(&text).map_err(|e| e.at(p.display().to_string()))?;
    if pred.n_outputs() != plan.observable.output_dim() {
        return Err(CliError::Config(format!(
            "{}: predictor has {} outputs, the configured observable has {}",
            p.display(),
            pred.n_outputs(),
            plan.observable.output_dim()
        )));
    }
    Ok(pred)
}

fn fmt_row(vals: impl IntoIterator<Item = f64>) -> String {
    vals.into_iter()
        .map(|v| format!("{v:.17e}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn predict(plan: &Plan, predictor: Option<&Path>) -> Result<(), CliError> {
    let cfg = plan.predict.as_ref().ok_or_else(|| {
        CliError::Config("predict: the configuration has no `predict` section".into())
    })?;
    let pred = load_predictor(plan, predictor)?;
    let m = plan.vf.input_dim();
    let inputs: Vec<Vec<f64>> = match cfg.control.signal() {
        Some(s) => s.sequence(cfg.steps, pred.ts, m),
        None => vec![vec![0.0; m]; cfg.steps],
    };
    if cfg.control != Control::None && pred.bd.is_none() {
        return Err(CliError::Config(
            "predict.control: the predictor was learned without an input matrix".into(),
        ));
    }
    let states = if cfg.steps == 0 {
        vec![cfg.x0.clone()]
    } else {
        Rk4::default().simulate(&plan.vf, &cfg.x0, &inputs, pred.ts)?
    };
    let truth: Vec<Vec<f64>> = states
        .iter()
        .map(|x| plan.observable.eval(x)[..plan.n_base].to_vec())
        .collect();
    let forced = (cfg.control != Control::None).then_some(inputs.as_slice());
    let predicted: Vec<Vec<f64>> = pred
        .predict(&cfg.x0, forced, cfg.steps)?
        .into_iter()
        .map(|y| y[..plan.n_base].to_vec())
        .collect();

    let nb = plan.n_base;
    let mut text = String::from("t");
    for i in 1..=nb {
        text.push_str(&format!(",y{i}"));
    }
    for i in 1..=nb {
        text.push_str(&format!(",y{i}_pred"));
    }
    for c in 1..=m {
        text.push_str(&format!(",u{c}"));
    }
    text.push('\n');
    for k in 0..=cfg.steps {
        let u = inputs.get(k).cloned().unwrap_or_else(|| vec![0.0; m]);
        text.push_str(&format!(
            "{:.6},{}\n",
            k as f64 * pred.ts,
            fmt_row(truth[k].iter().chain(&predicted[k]).chain(&u).copied())
        ));
    }
    write(&plan.out_dir.join("prediction.csv"), text.as_bytes())?;
    if cfg.steps > 0 {
        match rmse_error(&truth, &predicted) {
            Ok(e) => println!("prediction error over {} steps: {e:.3}%", cfg.steps),
            Err(e) => log::warn!("prediction error undefined: {e}"),
        }
    }
    if plan.plots {
        let t = |k: usize| k as f64 * pred.ts;
        let panels: Vec<Panel> = (0..nb)
            .map(|i| {
                Panel::new(
                    &format!("output {}", i + 1),
                    "t [s]",
                    &format!("y{}", i + 1),
                )
                .with(Series::line(
                    "true",
                    truth
                        .iter()
                        .enumerate()
                        .map(|(k, y)| (t(k), y[i]))
                        .collect(),
                ))
                .with(Series::dashed(
                    "predicted",
                    predicted
                        .iter()
                        .enumerate()
                        .map(|(k, y)| (t(k), y[i]))
                        .collect(),
                ))
            })
            .collect();
        write(
            &plan.out_dir.join("prediction.svg"),
            render(&panels, nb.min(2)).as_bytes(),
        )?;
    }
    Ok(())
}

fn mode_label(m: EigMode) -> &'static str {
    match m {
        EigMode::Lattice => "not optimized",
        EigMode::Optimized => "optimized",
    }
}

fn table_svg(t: &ErrorTable, modes: &[EigMode], controls: &[Control]) -> String {
    let mut panel = Panel::new(
        &format!("{} prediction error", t.system),
        "N",
        "mean error [%]",
    );
    for &mode in modes {
        for &ctl in controls {
            let pts =
                t.ns.iter()
                    .filter_map(|&n| t.cell(n, mode, ctl).map(|c| (n as f64, c.mean)))
                    .collect();
            let label = format!("{}, {}", mode_label(mode), ctl.label());
            panel.series.push(if mode == EigMode::Lattice {
                Series::dashed(&label, pts)
            } else {
                Series::line(&label, pts)
            });
        }
    }
    render(&[panel], 1)
}

pub fn table(plan: &Plan) -> Result<(), CliError> {
    let tp = plan.table.as_ref().ok_or_else(|| {
        CliError::Config("table: the configuration has no `table` section".into())
    })?;
    let p = &tp.protocol;
    let t = evaluate_table(p, &p.ns, &tp.modes, &tp.controls, p.n_test)?;
    let table_csv = csv_bytes(|b| t.write_csv(b))?;
    print!("{}", String::from_utf8_lossy(&table_csv));
    write(&plan.out_dir.join("table.csv"), &table_csv)?;
    write(
        &plan.out_dir.join("table_trials.csv"),
        &csv_bytes(|b| t.write_trials_csv(b))?,
    )?;
    if plan.plots {
        write(
            &plan.out_dir.join("table.svg"),
            table_svg(&t, &tp.modes, &tp.controls).as_bytes(),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MpcSummary {
    steps: usize,
    final_state: Vec<f64>,
    max_abs_input: f64,
    mean_qp_iterations: f64,
    unconverged_steps: usize,
    timing: koopeig::mpc::LoopTiming,
}

pub fn mpc(plan: &Plan, predictor: Option<&Path>) -> Result<(), CliError> {
    let mp = plan
        .mpc
        .as_ref()
        .ok_or_else(|| CliError::Config("mpc: the configuration has no `mpc` section".into()))?;
    let pred = load_predictor(plan, predictor)?;
    if pred.bd.is_none() {
        return Err(CliError::Config(
            "mpc: the predictor was learned without an input matrix (configure data.controlled)"
                .into(),
        ));
    }
    let log = closed_loop(
        &plan.vf,
        &pred,
        &mp.spec,
        &mp.x0,
        mp.duration,
        &mp.loop_opts,
    )?;
    write(
        &plan.out_dir.join("mpc_log.csv"),
        &csv_bytes(|b| log.write_csv(b))?,
    )?;
    let steps = log.records.len();
    let summary = MpcSummary {
        steps,
        final_state: if steps == 0 {
            mp.x0.clone()
        } else {
            log.final_state.clone()
        },
        max_abs_input: log.max_input_abs(),
        mean_qp_iterations: log.records.iter().map(|r| r.qp_iters as f64).sum::<f64>()
            / steps.max(1) as f64,
        unconverged_steps: log.records.iter().filter(|r| !r.converged).count(),
        timing: log.timing(),
    };
    println!(
        "{steps} steps, max |u| = {:.6}, mean QP iterations {:.1}, {} unconverged",
        summary.max_abs_input, summary.mean_qp_iterations, summary.unconverged_steps
    );
    write_json(&plan.out_dir.join("mpc_summary.json"), &summary)?;
    if plan.plots && steps > 0 {
        let t: Vec<f64> = log.records.iter().map(|r| r.t).collect();
        let series = |f: &dyn Fn(&koopeig::mpc::LoopRecord) -> f64| -> Vec<(f64, f64)> {
            log.records
                .iter()
                .zip(&t)
                .map(|(r, &t)| (t, f(r)))
                .collect()
        };
        let mut panels = Vec::new();
        if plan.vf.state_dim() >= 2 {
            panels.push(Panel::new("phase space", "x1", "x2").with(Series::line(
                "trajectory",
                log.records.iter().map(|r| (r.x[0], r.x[1])).collect(),
            )));
        }
        for i in 0..plan.vf.state_dim() {
            let mut p = Panel::new(&format!("x{}", i + 1), "t [s]", &format!("x{}", i + 1))
                .with(Series::line(&format!("x{}", i + 1), series(&|r| r.x[i])));
            if i < plan.n_base && i < log.reference_dim {
                p.series
                    .push(Series::dashed("reference", series(&|r| r.reference[i])));
            }
            panels.push(p);
        }
        for c in 0..plan.vf.input_dim() {
            panels.push(
                Panel::new(
                    &format!("input u{}", c + 1),
                    "t [s]",
                    &format!("u{}", c + 1),
                )
                .with(Series::line(&format!("u{}", c + 1), series(&|r| r.u[c])))
                .with(Series::dashed(
                    "bounds",
                    vec![
                        (t[0], mp.u_max[c]),
                        (t[steps - 1], mp.u_max[c]),
                        (f64::NAN, f64::NAN),
                        (t[0], mp.u_min[c]),
                        (t[steps - 1], mp.u_min[c]),
                    ],
                )),
            );
        }
        write(&plan.out_dir.join("mpc.svg"), render(&panels, 2).as_bytes())?;
    }
    Ok(())
}
