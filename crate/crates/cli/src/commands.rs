use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tbdq_core::associator::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, write_attention_rows, AssociatorModel,
    ATTENTION_CSV_HEADER,
};
use tbdq_core::io::{
    read_detections, read_mot, read_sequence_dir, sequence_dirs, write_mot, write_sequence_dir,
    MotRecord, RunConfig, DET_FILE, SIDECAR_FILE,
};
use tbdq_core::lifecycle::Tracker;
use tbdq_core::training::{train, write_loss_curve, TrainSequence};
use tbdq_core::Error;
use tbdq_metrics::{evaluate, MetricsReport};

use crate::cli::{Cli, Command};
use crate::error::{CliError, Result};
use crate::pipeline::{generate, mot_to_sequences, track_greedy};
use crate::plot;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `dir/stem<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_results(path: &Path) -> Result<Vec<MotRecord>> {
    let records = read_mot(path)?;
    if let Some(r) = records.iter().find(|r| r.id < 1) {
        return Err(CliError::Usage(format!(
            "{}: result ids must be positive (frame {})",
            path.display(),
            r.frame
        )));
    }
    Ok(records)
}

fn score(gt: &Path, results: &Path) -> Result<MetricsReport> {
    let gt = read_mot(gt)?;
    let pred = read_results(results)?;
    let (g, p) = mot_to_sequences(&gt, &pred);
    Ok(evaluate(&g, &p)?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            out,
            sequences,
        } => {
            let mut cfg = resolve_config(config.config.as_deref(), cli.seed)?;
            if let Some(n) = sequences {
                cfg.n_sequences = n;
            }
            for (i, s) in generate(&cfg, cfg.seed, cfg.n_sequences)?
                .iter()
                .enumerate()
            {
                write_sequence_dir(&out.join(format!("seq-{i:03}")), &s.gt, &s.observations)?;
            }
            write_text(&out.join("config.toml"), &cfg.to_toml())?;
            log::info!("wrote {} sequences to {}", cfg.n_sequences, out.display());
        }
        Command::Train { config, data, out } => {
            let cfg = resolve_config(config.config.as_deref(), cli.seed)?;
            let sequences = sequence_dirs(&data)?
                .iter()
                .map(|d| {
                    let s = read_sequence_dir(d)?;
                    TrainSequence::new(s.gt, s.observations)
                })
                .collect::<tbdq_core::Result<Vec<_>>>()?;
            let mut model = AssociatorModel::new(cfg.associator.clone(), cfg.seed)?;
            let report = train(&mut model, &sequences, &cfg.train, |_, _| Ok(()))?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
            save_checkpoint(&model, cfg.train.loss.weights(), &out)?;
            write_loss_curve(&sibling(&out, ".loss.csv"), &report.steps)?;
            write_text(&sibling(&out, ".config.toml"), &cfg.to_toml())?;
        }
        Command::Track {
            config,
            data,
            out,
            checkpoint,
            greedy,
            attention,
        } => {
            let explicit = config.config.is_some();
            let cfg = resolve_config(config.config.as_deref(), cli.seed)?;
            let (obs, size) = read_detections(&data.join(DET_FILE), &data.join(SIDECAR_FILE))?;
            let records = if greedy {
                if attention.is_some() {
                    return Err(CliError::Usage(
                        "--attention needs the learned tracker".into(),
                    ));
                }
                track_greedy(&cfg.greedy, &obs)?
            } else {
                let path = checkpoint.ok_or_else(|| {
                    CliError::Usage("--checkpoint is required unless --greedy".into())
                })?;
                let model = if explicit {
                    load_checkpoint_for(&path, &cfg.associator, cfg.train.loss.weights())?
                } else {
                    load_checkpoint(&path)?.0
                };
                let mut tracker = Tracker::new(&model, cfg.lifecycle.clone())?;
                let mut dump = String::new();
                if attention.is_some() {
                    dump.push_str(ATTENTION_CSV_HEADER);
                    dump.push('\n');
                }
                let mut records = Vec::new();
                for (t, o) in obs.iter().enumerate() {
                    let step = tracker.step(o, attention.is_some())?;
                    if let Some(maps) = &step.attention {
                        let mut buf = Vec::new();
                        write_attention_rows(&mut buf, t + 1, maps).expect("writing to memory");
                        dump.push_str(&String::from_utf8(buf).expect("ascii"));
                    }
                    records.extend(step.records);
                }
                if let Some(p) = &attention {
                    write_text(p, &dump)?;
                }
                records
            };
            let mot: Vec<MotRecord> = records
                .iter()
                .map(|r| MotRecord::from_output(r, size))
                .collect();
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
            write_mot(&mot, &out)?;
            write_text(&sibling(&out, ".config.toml"), &cfg.to_toml())?;
        }
        Command::Eval {
            gt,
            results,
            csv,
            per_alpha,
        } => {
            let report = score(&gt, &results)?;
            println!("{report}");
            if !report.mota_defined {
                println!("note: no ground truth, MOTA undefined");
            }
            if report.empty {
                println!("note: empty ground truth and results, HOTA terms set to 1");
            }
            if let Some(p) = csv {
                write_text(
                    &p,
                    &format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()),
                )?;
            }
            if let Some(p) = per_alpha {
                write_text(&p, &report.per_alpha_csv())?;
            }
        }
        Command::Compare {
            gt,
            a,
            b,
            label_a,
            label_b,
        } => {
            let ra = score(&gt, &a)?;
            let rb = score(&gt, &b)?;
            print!("{}", compare_table(&ra, &rb, &label_a, &label_b));
        }
        Command::Plot {
            results,
            gt,
            attention,
            out,
            width,
            height,
            max_frames,
        } => {
            let res = read_results(&results)?;
            let g = match gt {
                Some(p) => read_mot(&p)?,
                None => Vec::new(),
            };
            let n = plot::overlays(&res, &g, (width, height), max_frames, &out)?;
            log::info!("wrote {n} overlays");
            if let Some(p) = attention {
                let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
                let m = plot::heatmaps(&text, &out, 24)?;
                log::info!("wrote {m} heatmaps");
            }
        }
    }
    std::io::stdout().flush().ok();
    Ok(())
}

pub fn compare_table(a: &MetricsReport, b: &MetricsReport, label_a: &str, label_b: &str) -> String {
    let rows: [(&str, f64, f64, bool); 9] = [
        ("HOTA", a.hota, b.hota, true),
        ("DetA", a.det_a, b.det_a, true),
        ("AssA", a.ass_a, b.ass_a, true),
        ("MOTA", a.mota, b.mota, true),
        ("IDF1", a.idf1, b.idf1, true),
        ("FP", a.fp as f64, b.fp as f64, false),
        ("FN", a.fn_ as f64, b.fn_ as f64, false),
        ("IDSW", a.idsw as f64, b.idsw as f64, false),
        ("GT", a.gt as f64, b.gt as f64, false),
    ];
    let mut s = format!("{:<6} {:>10} {:>10} {:>10}\n", "", label_a, label_b, "diff");
    for (name, x, y, pct) in rows {
        if pct {
            s.push_str(&format!(
                "{name:<6} {:>10.2} {:>10.2} {:>+10.2}\n",
                100.0 * x,
                100.0 * y,
                100.0 * (y - x)
            ));
        } else {
            s.push_str(&format!("{name:<6} {x:>10} {y:>10} {:>+10}\n", y - x));
        }
    }
    s
}
