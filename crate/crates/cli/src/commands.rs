use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crosspmf::analysis::{self, ConditionAnalysis, Summary};
use crosspmf::coincidence::{
    simulate_fringe, ArmChannel, ChannelModel, FringeDataset, FringeSource, Pairing,
    SimulationOptions,
};
use crosspmf::entanglement::{
    bell_state, sweep_fidelity, BellStateId, CompensationOptimizer, CompensationSetting,
    FidelityGrid, SweepSpec,
};
use crosspmf::fiber::{cross_pair_exact, PhaseJitter, SmfDriftModel};
use crosspmf::formats::{self, GridRecord};
use crosspmf::polarization::JonesMatrix;
use crosspmf::rng::derive_seed;

use crate::config::{FiberKind, OutputFormat, RunConfig};
use crate::{CliError, ConfigError};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Create `<out>/<command>-<hash>` and echo the resolved config into it.
fn prepare_output(cfg: &RunConfig, command: &str, extra: &[&[u8]]) -> Result<PathBuf, CliError> {
    let dir = Path::new(&cfg.output.directory).join(format!("{command}-{}", cfg.digest(extra)));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let echo = dir.join("resolved_config.toml");
    fs::write(&echo, cfg.to_toml()).map_err(io_err(&echo))?;
    Ok(dir)
}

fn wants(cfg: &RunConfig, f: OutputFormat) -> bool {
    cfg.output.formats.contains(&f)
}

/// Angle or length as it appears in file names.
fn tag(x: f64) -> String {
    format!("{x}")
}

/// One fidelity panel in JSON form.
#[derive(Debug, Serialize)]
struct PanelJson<'a> {
    delta_length_nm: f64,
    theta_deg: &'a [f64],
    phi_deg: &'a [f64],
    /// `fidelity[i][j]` at `theta_deg[i]`, `phi_deg[j]`.
    fidelity: &'a [Vec<f64>],
    min_fidelity: f64,
    max_fidelity: f64,
    compensation: &'a [Vec<CompensationSetting>],
}

/// Fidelity sweep panels with their degree axes.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub theta_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
    pub delta_lengths_nm: Vec<f64>,
    pub grids: Vec<FidelityGrid>,
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepResult, CliError> {
    cfg.validate()?;
    if cfg.channel.fiber != FiberKind::PmfCross {
        return Err(ConfigError::Invalid {
            key: "channel.fiber".into(),
            message: "sweep-fidelity needs fiber = \"pmf_cross\"".into(),
        }
        .into());
    }
    let theta_deg = cfg.theta_axis_deg()?;
    let phi_deg = cfg.phi_axis_deg()?;
    let (alice, bob) = cfg.channel.pairs()?;
    let mut spec = SweepSpec::new(
        theta_deg.iter().map(|d| d.to_radians()).collect(),
        phi_deg.iter().map(|d| d.to_radians()).collect(),
        cfg.sweep
            .delta_lengths_nm
            .iter()
            .map(|nm| nm * 1e-9)
            .collect(),
    );
    spec.symmetry = cfg.sweep.symmetry;
    spec.optimizer = CompensationOptimizer::with_mode(cfg.compensation.mode);
    let grids = sweep_fidelity(&alice, &bob, &spec).map_err(run_err)?;
    Ok(SweepResult {
        theta_deg,
        phi_deg,
        delta_lengths_nm: cfg.sweep.delta_lengths_nm.clone(),
        grids,
    })
}

pub fn cmd_sweep_fidelity(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let result = run_sweep(cfg)?;
    let dir = prepare_output(cfg, "sweep-fidelity", &[])?;
    for (grid, nm) in result.grids.iter().zip(&result.delta_lengths_nm) {
        let stem = format!("fidelity_dL_{}nm", tag(*nm));
        if wants(cfg, OutputFormat::Csv) {
            let rows: Vec<GridRecord> =
                formats::grid_records(grid, &result.theta_deg, &result.phi_deg, *nm);
            formats::save_csv(&rows, &dir.join(format!("{stem}.csv")), |r, f| {
                formats::write_grid_csv(r, f)
            })?;
        }
        if wants(cfg, OutputFormat::Json) {
            let panel = PanelJson {
                delta_length_nm: *nm,
                theta_deg: &result.theta_deg,
                phi_deg: &result.phi_deg,
                fidelity: &grid.values,
                min_fidelity: grid.min(),
                max_fidelity: grid.max(),
                compensation: &grid.compensation,
            };
            formats::write_json(&panel, &dir.join(format!("{stem}.json")))?;
        }
        println!(
            "delta_length_nm = {nm}: min fidelity {}, max fidelity {}",
            grid.min(),
            grid.max()
        );
    }
    println!("wrote {}", dir.display());
    Ok(dir)
}

/// The launched singlet, both arm channels and the compensation applied once
/// against the nominal (drift-free) channel.
pub fn fringe_source(cfg: &RunConfig) -> Result<FringeSource, CliError> {
    let drift = &cfg.channel.drift;
    let launched = BellStateId::PsiMinus;
    let model = match cfg.channel.fiber {
        FiberKind::PmfCross => {
            let (a, b) = cfg.channel.pairs()?;
            let (ma, mb) = (cross_pair_exact(&a), cross_pair_exact(&b));
            let comp = CompensationOptimizer::with_mode(cfg.compensation.mode)
                .optimize(&bell_state(launched), &ma, &mb)
                .map_err(run_err)?;
            let arm = |pair, fixed, label: &str| -> Result<ArmChannel, CliError> {
                if drift.pmf_phase_jitter_rad > 0.0 {
                    let jitter =
                        PhaseJitter::new(drift.pmf_phase_jitter_rad, derive_seed(cfg.seed, label))
                            .map_err(run_err)?;
                    Ok(ArmChannel::PmfJitter { pair, jitter })
                } else {
                    Ok(ArmChannel::Fixed(fixed))
                }
            };
            ChannelModel {
                launched,
                alice: arm(a, ma, "alice/pmf_jitter")?,
                bob: arm(b, mb, "bob/pmf_jitter")?,
                compensation: comp.setting,
            }
        }
        FiberKind::Smf => {
            // The SMF link starts aligned; drift walks away from identity.
            let arm = |label: &str| -> Result<ArmChannel, CliError> {
                if drift.smf_step_rad > 0.0 {
                    let model = SmfDriftModel::new(
                        drift.smf_step_rad,
                        drift.smf_correlation_steps,
                        derive_seed(cfg.seed, label),
                    )
                    .map_err(run_err)?;
                    Ok(ArmChannel::SmfDrift {
                        start: JonesMatrix::identity(),
                        model,
                    })
                } else {
                    Ok(ArmChannel::Fixed(JonesMatrix::identity()))
                }
            };
            ChannelModel {
                launched,
                alice: arm("alice/smf_drift")?,
                bob: arm("bob/smf_drift")?,
                compensation: CompensationSetting::ZERO,
            }
        }
    };
    Ok(FringeSource::Channel(model))
}

/// One dataset per Alice setting; drift continues across datasets.
pub fn simulate_condition(cfg: &RunConfig) -> Result<Vec<FringeDataset>, CliError> {
    cfg.validate()?;
    let source = fringe_source(cfg)?;
    let params = cfg.source.params(derive_seed(cfg.seed, "counts"))?;
    let axis = cfg.two_theta_b_axis()?;
    let label = cfg.condition_label();
    cfg.fringe
        .two_theta_a_deg
        .iter()
        .enumerate()
        .map(|(j, a)| {
            simulate_fringe(
                &source,
                &params,
                *a,
                &axis,
                &label,
                SimulationOptions {
                    expectation: cfg.expectation,
                    first_index: (j * axis.len()) as u64,
                },
            )
            .map_err(run_err)
        })
        .collect()
}

pub fn cmd_simulate_fringe(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let datasets = simulate_condition(cfg)?;
    let dir = prepare_output(cfg, "simulate-fringe", &[])?;
    for ds in &datasets {
        let stem = format!("fringe_2thetaA_{}", tag(ds.metadata.two_theta_a_deg));
        if wants(cfg, OutputFormat::Csv) {
            formats::save_dataset(ds, &dir.join(format!("{stem}.csv")))?;
        }
        if wants(cfg, OutputFormat::Json) {
            formats::write_json(ds, &dir.join(format!("{stem}.json")))?;
        }
        for pairing in Pairing::REPORTED {
            match analysis::analyze_fringe(ds, pairing, cfg.analysis.method) {
                Ok(r) => println!(
                    "{} 2theta_A = {} deg, {}: V = {} +/- {}",
                    ds.metadata.condition,
                    ds.metadata.two_theta_a_deg,
                    pairing.column(),
                    r.visibility,
                    r.sigma_v
                ),
                Err(e) => println!(
                    "{} 2theta_A = {} deg, {}: visibility not available ({e})",
                    ds.metadata.condition,
                    ds.metadata.two_theta_a_deg,
                    pairing.column()
                ),
            }
        }
    }
    println!("wrote {}", dir.display());
    Ok(dir)
}

/// Read a dataset from its CSV (plus sidecar) or from a full JSON file.
/// Also returns the raw bytes that identify the input.
pub fn load_input(path: &Path) -> Result<(FringeDataset, Vec<u8>), CliError> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        let ds: FringeDataset = formats::read_json(path)?;
        let bytes = fs::read(path).map_err(io_err(path))?;
        return Ok((ds, bytes));
    }
    let ds = formats::load_dataset(path)?;
    let mut bytes = fs::read(path).map_err(io_err(path))?;
    let sidecar = formats::sidecar_path(path);
    bytes.extend(fs::read(&sidecar).map_err(io_err(&sidecar))?);
    Ok((ds, bytes))
}

/// Reports and one summary per condition label.
pub fn analyze_datasets(
    cfg: &RunConfig,
    datasets: &[FringeDataset],
) -> Result<Vec<ConditionAnalysis>, CliError> {
    let mut by_condition: BTreeMap<&str, Vec<FringeDataset>> = BTreeMap::new();
    for ds in datasets {
        by_condition
            .entry(ds.metadata.condition.as_str())
            .or_default()
            .push(ds.clone());
    }
    let opts = cfg.analysis_options();
    by_condition
        .values()
        .map(|group| Ok(analysis::summarize(group, &opts)?))
        .collect()
}

pub fn cmd_analyze(cfg: &RunConfig, paths: &[PathBuf]) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    if paths.is_empty() {
        return Err(CliError::Run("no input files".into()));
    }
    let mut datasets = Vec::with_capacity(paths.len());
    let mut inputs = Vec::with_capacity(paths.len());
    for p in paths {
        let (ds, bytes) = load_input(p)?;
        ds.validate()
            .map_err(|e| CliError::Schema(format!("{}: {e}", p.display())))?;
        datasets.push(ds);
        inputs.push(bytes);
    }
    // Input order does not change the result, so it does not change the hash either.
    inputs.sort();
    let results = analyze_datasets(cfg, &datasets)?;
    let extra: Vec<&[u8]> = inputs.iter().map(Vec::as_slice).collect();
    let dir = prepare_output(cfg, "analyze", &extra)?;
    let reports: Vec<_> = results
        .iter()
        .flat_map(|r| r.reports.iter().cloned())
        .collect();
    let summaries: Vec<Summary> = results.iter().map(|r| r.summary.clone()).collect();
    if wants(cfg, OutputFormat::Csv) {
        formats::save_csv(&reports, &dir.join("reports.csv"), |r, f| {
            formats::write_reports_csv(r, f)
        })?;
        formats::save_csv(&summaries, &dir.join("summary.csv"), |r, f| {
            formats::write_summary_csv(r, f)
        })?;
    }
    if wants(cfg, OutputFormat::Json) {
        formats::write_json(&reports, &dir.join("reports.json"))?;
        formats::write_json(&summaries, &dir.join("summary.json"))?;
    }
    for s in &summaries {
        println!(
            "{}: normalization factor {}, average amplitude {}, average visibility {}, average sigma_V {} ({})",
            s.condition_label, s.normalization_factor, s.avg_amplitude, s.avg_visibility, s.avg_sigma_v, s.method
        );
    }
    println!("wrote {}", dir.display());
    Ok(dir)
}

/// Averages of one (config, condition) cell over repetitions.
#[derive(Clone, Debug, Serialize)]
pub struct CompareCell {
    pub config: String,
    pub condition: String,
    pub label: String,
    pub repetitions: usize,
    pub mean_visibility: f64,
    pub se_visibility: f64,
    pub mean_sigma_v: f64,
    pub visibilities: Vec<f64>,
    pub sigma_vs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderingCheck {
    pub statement: String,
    /// Fraction of repetitions in which the statement holds.
    pub frequency: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DifferenceCheck {
    pub condition: String,
    /// Mean visibility of A minus that of B.
    pub difference: f64,
    pub combined_sigma: f64,
    pub within_3_sigma: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub repetitions: usize,
    /// A stable, A unstable, B stable, B unstable.
    pub cells: Vec<CompareCell>,
    pub orderings: Vec<OrderingCheck>,
    pub differences: Vec<DifferenceCheck>,
}

impl CompareReport {
    pub fn cell(&self, config: &str, condition: &str) -> &CompareCell {
        self.cells
            .iter()
            .find(|c| c.config == config && c.condition == condition)
            .expect("all four cells are present")
    }

    pub fn ordering(&self, statement: &str) -> Option<f64> {
        self.orderings
            .iter()
            .find(|o| o.statement == statement)
            .map(|o| o.frequency)
    }
}

fn condition_runs(
    cfg: &RunConfig,
    name: &str,
    condition: &str,
    reps: usize,
) -> Result<CompareCell, CliError> {
    let base = if condition == "stable" {
        cfg.stabilized()
    } else {
        cfg.clone()
    };
    let outcomes: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut run = base.clone();
            run.seed = derive_seed(cfg.seed, &format!("{name}/{r}"));
            let datasets = simulate_condition(&run)?;
            let s = analysis::summarize(&datasets, &run.analysis_options())?.summary;
            Ok((s.avg_visibility, s.avg_sigma_v))
        })
        .collect::<Result<_, CliError>>()?;
    let visibilities: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let sigma_vs: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let n = reps as f64;
    let mean_v = visibilities.iter().sum::<f64>() / n;
    let se = if reps > 1 {
        (visibilities
            .iter()
            .map(|v| (v - mean_v).powi(2))
            .sum::<f64>()
            / (n - 1.0)
            / n)
            .sqrt()
    } else {
        sigma_vs[0]
    };
    Ok(CompareCell {
        config: name.to_string(),
        condition: condition.to_string(),
        label: base.condition_label(),
        repetitions: reps,
        mean_visibility: mean_v,
        se_visibility: se,
        mean_sigma_v: sigma_vs.iter().sum::<f64>() / n,
        visibilities,
        sigma_vs,
    })
}

fn frequency(xs: &[f64], ys: &[f64]) -> f64 {
    let wins = xs.iter().zip(ys).filter(|(x, y)| x > y).count();
    wins as f64 / xs.len() as f64
}

/// Stable and unstable runs of both configs over seeded repetitions.
pub fn run_compare(a: &RunConfig, b: &RunConfig, reps: usize) -> Result<CompareReport, CliError> {
    if reps == 0 {
        return Err(CliError::Run("repetitions must be at least 1".into()));
    }
    a.validate()?;
    b.validate()?;
    let cells = vec![
        condition_runs(a, "A", "stable", reps)?,
        condition_runs(a, "A", "unstable", reps)?,
        condition_runs(b, "B", "stable", reps)?,
        condition_runs(b, "B", "unstable", reps)?,
    ];
    let (a_s, a_u, b_s, b_u) = (&cells[0], &cells[1], &cells[2], &cells[3]);
    let orderings = vec![
        OrderingCheck {
            statement: "V(B,unstable) > V(A,unstable)".into(),
            frequency: frequency(&b_u.visibilities, &a_u.visibilities),
        },
        OrderingCheck {
            statement: "sigma_V(A,unstable) > sigma_V(B,unstable)".into(),
            frequency: frequency(&a_u.sigma_vs, &b_u.sigma_vs),
        },
        OrderingCheck {
            statement: "V(A,stable) > V(B,stable)".into(),
            frequency: frequency(&a_s.visibilities, &b_s.visibilities),
        },
        OrderingCheck {
            statement: "V(A,stable) > V(A,unstable)".into(),
            frequency: frequency(&a_s.visibilities, &a_u.visibilities),
        },
        OrderingCheck {
            statement: "V(B,stable) > V(B,unstable)".into(),
            frequency: frequency(&b_s.visibilities, &b_u.visibilities),
        },
    ];
    let differences = [("stable", a_s, b_s), ("unstable", a_u, b_u)]
        .into_iter()
        .map(|(condition, x, y)| {
            let difference = x.mean_visibility - y.mean_visibility;
            let combined_sigma = x.se_visibility.hypot(y.se_visibility);
            DifferenceCheck {
                condition: condition.to_string(),
                difference,
                combined_sigma,
                within_3_sigma: difference.abs() < 3.0 * combined_sigma,
            }
        })
        .collect();
    Ok(CompareReport {
        repetitions: reps,
        cells,
        orderings,
        differences,
    })
}

pub fn cmd_compare(a: &RunConfig, b: &RunConfig, reps: usize) -> Result<PathBuf, CliError> {
    let report = run_compare(a, b, reps)?;
    let b_toml = b.to_toml();
    let reps_bytes = (reps as u64).to_le_bytes();
    let dir = prepare_output(a, "compare", &[b_toml.as_bytes(), &reps_bytes])?;
    let echo_b = dir.join("resolved_config_b.toml");
    fs::write(&echo_b, &b_toml).map_err(io_err(&echo_b))?;
    if wants(a, OutputFormat::Csv) {
        let path = dir.join("compare.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Run(e.to_string()))?;
        let header = [
            "config",
            "condition",
            "label",
            "repetitions",
            "mean_visibility",
            "se_visibility",
            "mean_sigma_v",
        ];
        w.write_record(header).map_err(run_err)?;
        for c in &report.cells {
            w.write_record([
                c.config.clone(),
                c.condition.clone(),
                c.label.clone(),
                c.repetitions.to_string(),
                format!("{}", c.mean_visibility),
                format!("{}", c.se_visibility),
                format!("{}", c.mean_sigma_v),
            ])
            .map_err(run_err)?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    if wants(a, OutputFormat::Json) {
        formats::write_json(&report, &dir.join("compare.json"))?;
    }
    println!(
        "{:<7} {:<9} {:<18} {:>12} {:>12} {:>12}",
        "config", "condition", "label", "V", "se(V)", "sigma_V"
    );
    for c in &report.cells {
        println!(
            "{:<7} {:<9} {:<18} {:>12.6} {:>12.6} {:>12.6}",
            c.config, c.condition, c.label, c.mean_visibility, c.se_visibility, c.mean_sigma_v
        );
    }
    for o in &report.orderings {
        println!(
            "{}: frequency {} over {} repetitions",
            o.statement, o.frequency, reps
        );
    }
    for d in &report.differences {
        println!(
            "{}: V(A) - V(B) = {} (combined sigma {}, {})",
            d.condition,
            d.difference,
            d.combined_sigma,
            if d.within_3_sigma {
                "indistinguishable"
            } else {
                "distinguishable"
            }
        );
    }
    println!("wrote {}", dir.display());
    Ok(dir)
}
