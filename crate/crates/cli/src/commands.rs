use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use serde_json::json;

use condiv::baselines::KnnConfig;
use condiv::bench::{loglog_slope, run_bench};
use condiv::data::PairedDataset;
use condiv::divergence::{conditional_statistic, marginal_divergence, relatedness_matrix};
use condiv::drift::{detect_stream, evaluate_detections, DetectorConfig};
use condiv::io::{read_paired_file, read_stream_file, write_csv_rows, write_events, write_paired, write_stream};
use condiv::rng::derive_seed;
use condiv::selection::{greedy_select, SelectionConfig};
use condiv::synth::{
    generate_model, model_stream, power_test_with, Model, ModelSpec, PowerReport, PowerRow, PowerStatistic,
};
use condiv::testing::{conditional_permutation_test, marginal_permutation_test, MarginalStatistic};
use condiv::{DivergenceKind, DivergenceSpec, MatrixKind, PermutationConfig};

use crate::config::FileConfig;
use crate::{Cli, CliError, Command, Format, KindArg, MarginalArg, MatrixArg, ModelArgs, PermArgs, SpecArgs, StatisticArg};

type Out<'a> = &'a mut dyn Write;

struct Ctx<'a> {
    file: &'a FileConfig,
    seed: u64,
    format: Format,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io(e: std::io::Error) -> CliError {
    CliError::Usage(format!("write failed: {e}"))
}

fn parse_enum<T: clap::ValueEnum>(key: &str, value: &str) -> Result<T, CliError> {
    T::from_str(value, true).map_err(|_| usage(format!("config key {key:?}: invalid value {value:?}")))
}

impl Ctx<'_> {
    fn spec(&self, args: &SpecArgs) -> Result<DivergenceSpec, CliError> {
        let kind = match args.divergence {
            Some(k) => k,
            None => match &self.file.divergence {
                Some(v) => parse_enum("divergence", v)?,
                None => KindArg::Vn,
            },
        };
        let matrix = match args.matrix {
            Some(m) => m,
            None => match &self.file.matrix {
                Some(v) => parse_enum("matrix", v)?,
                None => MatrixArg::Correntropy,
            },
        };
        let mut spec = DivergenceSpec::new(
            match kind {
                KindArg::Vn => DivergenceKind::VonNeumann,
                KindArg::Logdet => DivergenceKind::LogDet,
            },
            match matrix {
                MatrixArg::Correntropy => MatrixKind::Correntropy,
                MatrixArg::Covariance => MatrixKind::Covariance,
            },
        );
        if let Some(r) = args.width_ratio.or(self.file.width_ratio) {
            spec = spec.with_width_ratio(r);
        }
        spec.shared_widths = args.shared_widths || self.file.shared_widths.unwrap_or(false);
        spec.kernel.global_width = !(args.pair_widths || self.file.pair_widths.unwrap_or(false));
        spec.kernel.validate()?;
        Ok(spec)
    }

    fn perm(&self, args: &PermArgs, desk: bool, seed: u64) -> Result<PermutationConfig, CliError> {
        let default = if desk { 100 } else { 500 };
        let cfg = PermutationConfig {
            permutations: args.permutations.or(self.file.permutations).unwrap_or(default),
            significance: args.significance.or(self.file.significance).unwrap_or(0.1),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn target(&self, target: &Option<String>) -> String {
        target.clone().or_else(|| self.file.target.clone()).unwrap_or_else(|| "y".into())
    }

    fn models(&self, args: &ModelArgs) -> Result<(ModelSpec, ModelSpec, usize), CliError> {
        let (a, b) = args
            .pair
            .split_once(':')
            .ok_or_else(|| usage(format!("--pair expects two models such as A:C, got {:?}", args.pair)))?;
        let p = args.p.or(self.file.p).unwrap_or(3);
        let n = args.n.or(self.file.n).unwrap_or(500);
        let runs = args.runs.or(self.file.runs).unwrap_or(if args.desk { 50 } else { 100 });
        let m1 = ModelSpec::new(a.parse()?, p, n, derive_seed(self.seed, 1));
        let m2 = ModelSpec::new(b.parse()?, p, n, derive_seed(self.seed, 2));
        m1.validate()?;
        Ok((m1, m2, runs))
    }

    fn emit<T: Serialize>(&self, out: Out, rows: &[T], json: serde_json::Value) -> Result<(), CliError> {
        match self.format {
            Format::Csv => write_csv_rows(out, rows)?,
            Format::Json => writeln!(out, "{json}").map_err(io)?,
        }
        Ok(())
    }
}

fn load_pair(a: &Path, b: &Path, target: &str) -> Result<(PairedDataset, PairedDataset), CliError> {
    let (n1, s1) = read_paired_file(a, target)?;
    let (n2, s2) = read_paired_file(b, target)?;
    if n1.len() != n2.len() {
        return Err(usage(format!(
            "{}: expected {} feature columns as in {}, found {} ({})",
            b.display(),
            n1.len(),
            a.display(),
            n2.len(),
            n2.join(",")
        )));
    }
    Ok((s1, s2))
}

pub fn run(cli: &Cli, file: &FileConfig, out: Out) -> Result<(), CliError> {
    let format = match cli.format {
        Some(f) => f,
        None => match &file.format {
            Some(v) => parse_enum("format", v)?,
            None => Format::Json,
        },
    };
    if let Some(t) = cli.threads.or(file.threads) {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let ctx = Ctx {
        file,
        seed: cli.seed.or(file.seed).unwrap_or(0),
        format,
    };
    match &cli.command {
        Command::Divergence {
            file1,
            file2,
            target,
            spec,
            asymmetric,
            marginal,
        } => {
            let spec = ctx.spec(spec)?.symmetric(!asymmetric);
            let (s1, s2) = load_pair(file1, file2, &ctx.target(target))?;
            let value = if *marginal {
                marginal_divergence(s1.x(), s2.x(), &spec)?
            } else {
                conditional_statistic(&s1, &s2, &spec)?
            };
            #[derive(Serialize)]
            struct Row {
                value: f64,
            }
            ctx.emit(out, &[Row { value }], json!({ "value": value, "spec": spec }))
        }
        Command::Test {
            file1,
            file2,
            target,
            spec,
            perm,
            marginal,
        } => {
            let spec = ctx.spec(spec)?;
            let cfg = ctx.perm(perm, false, ctx.seed)?;
            let (s1, s2) = load_pair(file1, file2, &ctx.target(target))?;
            let r = match marginal {
                None => conditional_permutation_test(&s1, &s2, &spec, &cfg)?,
                Some(MarginalArg::Bregman) => {
                    marginal_permutation_test(s1.x(), s2.x(), &MarginalStatistic::BregmanCorrentropy(spec), &cfg)?
                }
                Some(MarginalArg::Mmd) => marginal_permutation_test(s1.x(), s2.x(), &MarginalStatistic::Mmd, &cfg)?,
            };
            #[derive(Serialize)]
            struct Row {
                d0: f64,
                p_value: f64,
                h0_retained: bool,
                permutations: usize,
                significance: f64,
            }
            let row = Row {
                d0: r.d0,
                p_value: r.p_value,
                h0_retained: r.h0_retained,
                permutations: cfg.permutations,
                significance: cfg.significance,
            };
            let j = json!({
                "d0": r.d0, "p_value": r.p_value, "h0_retained": r.h0_retained,
                "permutations": cfg.permutations, "significance": cfg.significance, "perm_stats": r.perm_stats,
            });
            ctx.emit(out, &[row], j)
        }
        Command::Power {
            model,
            spec,
            perm,
            statistic,
            k,
        } => {
            let (m1, m2, runs) = ctx.models(model)?;
            let cfg = ctx.perm(perm, model.desk, derive_seed(ctx.seed, 3))?;
            let stat = match statistic {
                StatisticArg::Bregman => PowerStatistic::Divergence(ctx.spec(spec)?),
                StatisticArg::Knn => PowerStatistic::KnnConditionalKl {
                    k: if *k > 0 { *k } else { KnnConfig::default().k },
                },
            };
            let report = power_test_with(&m1, &m2, runs, &cfg, &stat)?;
            let row = PowerRow::new(&m1, &m2, &stat, &report);
            let j = json!({ "row": row, "report": report });
            ctx.emit(out, &[row], j)
        }
        Command::Sweep {
            model,
            spec,
            perm,
            ratios,
        } => {
            let (m1, m2, runs) = ctx.models(model)?;
            let cfg = ctx.perm(perm, model.desk, derive_seed(ctx.seed, 3))?;
            let spec = ctx.spec(spec)?;
            let ratios = ratios
                .clone()
                .or_else(|| ctx.file.ratios.clone())
                .unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0, 4.0]);
            let sweep = condiv::synth::width_sweep(&m1, &m2, &ratios, runs, &cfg, &spec)?;
            #[derive(Serialize)]
            struct Row {
                ratio: f64,
                #[serde(flatten)]
                row: PowerRow,
            }
            let rows: Vec<Row> = sweep
                .iter()
                .map(|(ratio, rep)| Row {
                    ratio: *ratio,
                    row: PowerRow::new(&m1, &m2, &PowerStatistic::Divergence(spec.with_width_ratio(*ratio)), rep),
                })
                .collect();
            let reports: Vec<&PowerReport> = sweep.iter().map(|s| &s.1).collect();
            let j = json!({ "rows": rows, "reports": reports });
            match ctx.format {
                // flattened structs need the header written by hand
                Format::Csv => {
                    writeln!(out, "ratio,pair,statistic,p,n,runs,rejection_fraction").map_err(io)?;
                    for r in &rows {
                        writeln!(
                            out,
                            "{},{},{},{},{},{},{}",
                            r.ratio, r.row.pair, r.row.statistic, r.row.p, r.row.n, r.row.runs, r.row.rejection_fraction
                        )
                        .map_err(io)?;
                    }
                    Ok(())
                }
                Format::Json => writeln!(out, "{j}").map_err(io),
            }
        }
        Command::Drift {
            stream,
            window,
            stride,
            cooldown,
            spec,
            perm,
            truth,
            tolerance,
            report,
        } => {
            let samples = read_stream_file(stream)?;
            let w = window.or(ctx.file.window).unwrap_or(200);
            let mut cfg = DetectorConfig::new(w, ctx.perm(perm, false, ctx.seed)?);
            cfg.stride = stride.or(ctx.file.stride).unwrap_or(1);
            cfg.cooldown = cooldown.or(ctx.file.cooldown).unwrap_or(w);
            cfg.spec = ctx.spec(spec)?;
            let events = detect_stream(&samples, &cfg)?;
            match ctx.format {
                Format::Json => write_events(&mut *out, &events)?,
                Format::Csv => write_csv_rows(&mut *out, &events)?,
            }
            if let Some(path) = report {
                let truth = truth.clone().unwrap_or_default();
                let tol = tolerance.or(ctx.file.tolerance).unwrap_or(2 * w);
                let rep = evaluate_detections(&events, &truth, tol);
                let text = serde_json::to_string_pretty(&rep).map_err(|e| usage(e.to_string()))?;
                std::fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Select {
            file,
            target,
            k,
            useless_reps,
            spec,
        } => {
            let (names, ds) = read_paired_file(file, &ctx.target(target))?;
            let k = k
                .or(ctx.file.k)
                .ok_or_else(|| usage("select needs --k (number of features)"))?;
            let mut cfg = SelectionConfig::new(k, ctx.seed);
            cfg.useless_reps = useless_reps.or(ctx.file.useless_reps).unwrap_or(10);
            cfg.spec = ctx.spec(spec)?;
            let r = greedy_select(ds.x(), ds.y(), &cfg)?;
            let selected: Vec<&str> = r.selected.iter().map(|&i| names[i].as_str()).collect();
            #[derive(Serialize)]
            struct Row<'a> {
                rank: usize,
                feature: &'a str,
                score: f64,
            }
            let rows: Vec<Row> = selected
                .iter()
                .zip(&r.scores)
                .enumerate()
                .map(|(i, (f, s))| Row {
                    rank: i + 1,
                    feature: f,
                    score: *s,
                })
                .collect();
            ctx.emit(out, &rows, json!({ "selected": selected, "scores": r.scores }))
        }
        Command::Relate { files, target, spec } => {
            let spec = ctx.spec(spec)?;
            let target = ctx.target(target);
            let mut tasks = Vec::new();
            let mut width = None;
            for f in files {
                let (names, ds) = read_paired_file(f, &target)?;
                if *width.get_or_insert(names.len()) != names.len() {
                    return Err(usage(format!(
                        "{}: expected {} feature columns, found {}",
                        f.display(),
                        width.unwrap_or(0),
                        names.len()
                    )));
                }
                tasks.push(ds);
            }
            let m = relatedness_matrix(&tasks, &spec)?;
            let labels: Vec<String> = files
                .iter()
                .map(|f| f.file_stem().map_or_else(|| f.display().to_string(), |s| s.to_string_lossy().into_owned()))
                .collect();
            let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
            match ctx.format {
                Format::Json => writeln!(out, "{}", json!({ "tasks": labels, "matrix": rows })).map_err(io),
                Format::Csv => {
                    writeln!(out, "task,{}", labels.join(",")).map_err(io)?;
                    for (l, r) in labels.iter().zip(&rows) {
                        let cells: Vec<String> = r.iter().map(f64::to_string).collect();
                        writeln!(out, "{l},{}", cells.join(",")).map_err(io)?;
                    }
                    Ok(())
                }
            }
        }
        Command::Bench { ns, d, min_trial_ms } => {
            let kinds = [MatrixKind::Correntropy, MatrixKind::Covariance];
            let rows = run_bench(ns, *d, &kinds, ctx.seed, Duration::from_millis(*min_trial_ms))?;
            let slopes = json!({
                "correntropy": loglog_slope(&rows, "correntropy")?,
                "covariance": loglog_slope(&rows, "covariance")?,
            });
            ctx.emit(out, &rows, json!({ "rows": rows, "slopes": slopes }))
        }
        Command::Generate { model, stream, p, n } => {
            let p = p.or(ctx.file.p).unwrap_or(3);
            match (model, stream) {
                (Some(m), None) => {
                    let n = n.or(ctx.file.n).unwrap_or(500);
                    let ds = generate_model(&ModelSpec::new(m.parse()?, p, n, ctx.seed))?;
                    let names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
                    write_paired(&mut *out, &names, "y", &ds)?;
                }
                (None, Some(segments)) => {
                    let segs = segments
                        .iter()
                        .map(|s| {
                            let (m, len) = s
                                .split_once(':')
                                .ok_or_else(|| usage(format!("--stream segment {s:?} should look like A:1000")))?;
                            let len: usize = len.parse().map_err(|_| usage(format!("bad segment length in {s:?}")))?;
                            Ok((m.parse::<Model>()?, len))
                        })
                        .collect::<Result<Vec<_>, CliError>>()?;
                    write_stream(&mut *out, &model_stream(&segs, p, ctx.seed)?)?;
                }
                _ => return Err(usage("generate needs exactly one of --model or --stream")),
            }
            Ok(())
        }
    }
}
