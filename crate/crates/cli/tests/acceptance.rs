//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//!
//! Run with `cargo test -p crosspmf-cli --test acceptance`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::Matrix4;
use rand::Rng;

use crosspmf::analysis::{
    bootstrap_visibility, extrema_of, normalize_counts, visibility, visibility_error, ExtremaMethod,
};
use crosspmf::coincidence::{
    heralding_efficiency, heralding_efficiency_corrected, ideal_fringe, simulate_fringe,
    FringeSource, Pairing, SimulationOptions, SourceParams,
};
use crosspmf::entanglement::{bell_state, evolve, BellStateId, CompensationSetting};
use crosspmf::fiber::{
    cross_pair_approx, cross_pair_closed_form, cross_pair_exact, pmf_jones, Birefringence,
    CrossAlignedPair, PmfSegment, DEFAULT_DELTA_N,
};
use crosspmf::polarization::{
    hwp, linear_retarder, qwp, rotation, tensor, BipartiteState, JonesMatrix, C64, EIGEN_FLOOR,
};
use crosspmf::rng;
use crosspmf_cli::commands::{run_compare, run_sweep};
use crosspmf_cli::config::FiberKind;
use crosspmf_cli::RunConfig;

type Check = Result<String, String>;

/// Number, name, runtime limit in seconds, and the check itself.
type Criterion = (u32, &'static str, f64, fn() -> Check);

/// Seeded stream for the harness's own random draws.
fn draws(criterion: u64) -> impl Rng {
    rng::stream(0x00AC_CE57, 100 + criterion, 0)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn segment(l: f64, lambda_nm: f64, dn: f64) -> PmfSegment {
    PmfSegment::new(l, lambda_nm, Birefringence::DeltaN(dn), 0.0).unwrap()
}

fn c1_identity() -> Check {
    let mut r = draws(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let l = r.random_range(0.1..=10.0);
        let lambda = if r.random::<bool>() { 810.0 } else { 1550.0 };
        let dn = r.random_range(1e-4..=1e-3);
        let p = CrossAlignedPair::new(segment(l, lambda, dn), 0.0, 0.0, 0.0)
            .map_err(|e| e.to_string())?;
        let (rl, _) = p.phases();
        let d = cross_pair_exact(&p)
            .scaled_by_phase(-rl)
            .max_entry_distance(&JonesMatrix::identity());
        worst = worst.max(d);
    }
    ensure(worst < 1e-12, || format!("max distance {worst:e}"))?;
    Ok(format!("1000 draws, max |e^(-irL)M - I| = {worst:.3e}"))
}

fn c2_closed_form() -> Check {
    let mut r = draws(2);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let l = r.random_range(0.1..10.0);
        let dl = r.random_range(-0.5..0.5) * l;
        let lambda = if r.random::<bool>() { 810.0 } else { 1550.0 };
        let dn = r.random_range(1e-4..1e-3);
        let theta = r.random_range(-PI..PI);
        let p = CrossAlignedPair::new(segment(l, lambda, dn), dl, theta, 0.0)
            .map_err(|e| e.to_string())?;
        worst = worst.max(cross_pair_exact(&p).max_entry_distance(&cross_pair_closed_form(&p)));
    }
    ensure(worst < 1e-10, || format!("max entry distance {worst:e}"))?;
    Ok(format!("100000 draws, max entry distance {worst:.3e}"))
}

fn c3_sweep() -> Check {
    let cfg = RunConfig::default().resolved();
    let sweep = run_sweep(&cfg).map_err(|e| e.to_string())?;
    let min = sweep
        .grids
        .iter()
        .map(|g| g.min())
        .fold(f64::INFINITY, f64::min);
    ensure(min >= 0.98, || format!("min fidelity {min}"))?;
    let d0 = sweep
        .delta_lengths_nm
        .iter()
        .position(|&d| d == 0.0)
        .ok_or("no ΔL = 0 panel")?;
    let t0 = sweep
        .theta_deg
        .iter()
        .position(|&t| t == 0.0)
        .ok_or("no θ = 0")?;
    let p0 = sweep
        .phi_deg
        .iter()
        .position(|&p| p == 0.0)
        .ok_or("no φ = 0")?;
    let origin = sweep.grids[d0].get(t0, p0);
    ensure((origin - 1.0).abs() < 1e-9, || {
        format!("origin fidelity {origin}")
    })?;

    let mut outside = cfg.clone();
    outside.sweep.theta_min_deg = 5.0;
    outside.sweep.theta_max_deg = 15.0;
    outside.sweep.theta_step_deg = 10.0;
    let o = run_sweep(&outside).map_err(|e| e.to_string())?;
    let mut violations = 0;
    let mut largest_drop = 0.0f64;
    for g in &o.grids {
        for j in 0..o.phi_deg.len() {
            let (f5, f15) = (g.get(0, j), g.get(1, j));
            if f15 > f5 + 1e-12 {
                violations += 1;
            }
            largest_drop = largest_drop.max(f5 - f15);
        }
    }
    ensure(violations == 0, || {
        format!("{violations} cells with F(15°) > F(5°)")
    })?;
    let cells: usize = sweep
        .grids
        .iter()
        .map(|g| g.values.len() * g.phi_axis.len())
        .sum();
    Ok(format!(
        "{} panels, {cells} cells, min F {min:.6}, origin 1 - F = {:.1e}, F(15°) <= F(5°) in all {} (φ, ΔL), largest drop {largest_drop:.4}",
        sweep.grids.len(),
        1.0 - origin,
        o.grids.len() * o.phi_deg.len()
    ))
}

fn c4_approx_regime() -> Check {
    let dn = DEFAULT_DELTA_N;
    let lambda_m = 810e-9;
    // rL = 2π·617 ≡ 0.
    let l = 617.0 * lambda_m / dn;
    let r = TAU * dn / lambda_m;
    let err = |eps: f64| -> Result<f64, String> {
        let p = CrossAlignedPair::new(segment(l, 810.0, dn), eps / r, eps, 0.0)
            .map_err(|e| e.to_string())?;
        let (rl, _) = p.phases();
        Ok(cross_pair_approx(&p).max_entry_distance(&cross_pair_exact(&p).scaled_by_phase(-rl)))
    };
    let (big, small) = (err(0.1)?, err(0.01)?);
    let ratio = big / small;
    ensure(ratio >= 10.0, || {
        format!("error {big:e} -> {small:e}, ratio {ratio}")
    })?;
    Ok(format!(
        "error {big:.3e} at 0.1, {small:.3e} at 0.01, ratio {ratio:.1}"
    ))
}

fn c5_singlet_fringe() -> Check {
    let singlet = bell_state(BellStateId::PsiMinus);
    let mut worst = 0.0f64;
    let mut visibilities = Vec::new();
    for two_theta_a_deg in [0.0f64, 30.0, 45.0, 90.0] {
        let axis_deg: Vec<f64> = (0..181).map(f64::from).collect();
        let hwp_b: Vec<f64> = axis_deg.iter().map(|d| (d / 2.0).to_radians()).collect();
        let f = ideal_fringe(&singlet, (two_theta_a_deg / 2.0).to_radians(), &hwp_b)
            .map_err(|e| e.to_string())?;
        for (k, d) in axis_deg.iter().enumerate() {
            let expected = 0.5 * (two_theta_a_deg - d).to_radians().sin().powi(2);
            worst = worst.max((f.a1b1[k] - expected).abs());
        }
        let e =
            extrema_of(&axis_deg, &f.a1b1, ExtremaMethod::Pointwise).map_err(|e| e.to_string())?;
        visibilities.push(visibility(e.c_max, e.c_min).map_err(|e| e.to_string())?);
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    let v_min = visibilities.iter().copied().fold(f64::INFINITY, f64::min);
    ensure((v_min - 1.0).abs() < 1e-12, || format!("singlet V {v_min}"))?;

    let mixed = BipartiteState::maximally_mixed();
    let axis_deg: Vec<f64> = (0..181).map(f64::from).collect();
    let hwp_b: Vec<f64> = axis_deg.iter().map(|d| (d / 2.0).to_radians()).collect();
    let f = ideal_fringe(&mixed, 0.0, &hwp_b).map_err(|e| e.to_string())?;
    let e = extrema_of(&axis_deg, &f.a1b1, ExtremaMethod::Pointwise).map_err(|e| e.to_string())?;
    let v_mixed = visibility(e.c_max, e.c_min).map_err(|e| e.to_string())?;
    ensure(v_mixed.abs() < 1e-12, || format!("mixed V {v_mixed}"))?;
    Ok(format!(
        "181 points x 4 settings, max deviation {worst:.2e}, singlet V = {v_min}, mixed V = {v_mixed:.1e}"
    ))
}

fn c6_counting() -> Check {
    let params = SourceParams::default();
    let ratio = params.accidental_ratio();
    ensure(ratio < 0.01, || format!("accidental ratio {ratio}"))?;
    // A 10 s run: ten 1 s points around the fringe.
    let axis: Vec<f64> = (0..10).map(|i| 18.0 * f64::from(i)).collect();
    let source = FringeSource::State(bell_state(BellStateId::PsiMinus));
    let run = SourceParams { seed: 20, ..params };
    let ds = simulate_fringe(
        &source,
        &run,
        45.0,
        &axis,
        "heralding",
        SimulationOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let est = heralding_efficiency_corrected(&ds).map_err(|e| e.to_string())?;
    let raw = heralding_efficiency(&ds).map_err(|e| e.to_string())?;
    let z = (est.eta - params.heralding_eta) / est.std_error;
    ensure(z.abs() < 3.0, || {
        format!("eta {} ± {} ({z:.2} SE)", est.eta, est.std_error)
    })?;
    Ok(format!(
        "accidental/coincidence {:.3}%, eta {:.5} ± {:.5} ({z:+.2} SE; uncorrected {:.5})",
        100.0 * ratio,
        est.eta,
        est.std_error,
        raw.eta
    ))
}

/// Werner state `p·|ψ⁻⟩⟨ψ⁻| + (1 − p)·I/4`.
fn werner(p: f64) -> BipartiteState {
    let singlet = bell_state(BellStateId::PsiMinus);
    let m =
        singlet.matrix() * C64::new(p, 0.0) + Matrix4::identity() * C64::new((1.0 - p) / 4.0, 0.0);
    BipartiteState::new(m).unwrap()
}

fn c7_error_propagation() -> Check {
    let mut r = draws(7);
    let axis: Vec<f64> = (0..37).map(|i| 5.0 * f64::from(i)).collect();
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let params = SourceParams {
            pump_mw: r.random_range(0.2..5.0),
            integration_time_s: r.random_range(0.1..3.0),
            dark_count_rate_hz: r.random_range(0.0..500.0),
            seed: k,
            ..SourceParams::default()
        };
        let state = werner(r.random_range(0.5..0.99));
        let two_theta_a = r.random_range(0.0..180.0);
        let pairing = if r.random::<bool>() {
            Pairing::A1B1
        } else {
            Pairing::A2B1
        };
        let method = if r.random::<bool>() {
            ExtremaMethod::Pointwise
        } else {
            ExtremaMethod::CosineFit
        };
        let ds = simulate_fringe(
            &FringeSource::State(state),
            &params,
            two_theta_a,
            &axis,
            "bootstrap",
            SimulationOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let counts = ds.fringe(pairing);
        let e = extrema_of(&axis, &counts, method).map_err(|e| e.to_string())?;
        let sigma_v = e.sigma_v().map_err(|e| e.to_string())?;
        let b = bootstrap_visibility(&axis, &counts, method, 1000, 1000 + k)
            .map_err(|e| e.to_string())?;
        let rel = (sigma_v / b.std - 1.0).abs();
        ensure(rel <= 0.15, || {
            format!(
                "config {k} ({method}): analytic {sigma_v:.5} bootstrap {:.5}",
                b.std
            )
        })?;
        worst = worst.max(rel);
    }
    let mut closed = 0.0f64;
    for n in [1.0, 7.0, 100.0, 12345.0, 1e6] {
        let s = visibility_error(n, n, n.sqrt(), n.sqrt()).map_err(|e| e.to_string())?;
        closed = closed.max((s - 1.0 / (2.0 * n).sqrt()).abs());
    }
    ensure(closed < 1e-12, || format!("closed case off by {closed:e}"))?;
    Ok(format!(
        "100 configs, worst |analytic/bootstrap - 1| = {:.1}%, closed case error {closed:.1e}",
        100.0 * worst
    ))
}

fn compare_config(fiber: FiberKind, drift: f64) -> RunConfig {
    let mut c = RunConfig::default().resolved();
    c.channel.fiber = fiber;
    match fiber {
        FiberKind::Smf => c.channel.drift.smf_step_rad = drift,
        FiberKind::PmfCross => c.channel.drift.pmf_phase_jitter_rad = drift,
    }
    c
}

fn c8_orderings() -> Check {
    let a = compare_config(FiberKind::Smf, 0.3);
    let b = compare_config(FiberKind::PmfCross, 0.05);
    let report = run_compare(&a, &b, 100).map_err(|e| e.to_string())?;
    let mut line = Vec::new();
    for statement in [
        "V(B,unstable) > V(A,unstable)",
        "sigma_V(A,unstable) > sigma_V(B,unstable)",
    ] {
        let f = report
            .ordering(statement)
            .ok_or_else(|| format!("missing ordering {statement}"))?;
        ensure(f >= 0.99, || format!("{statement}: frequency {f}"))?;
        line.push(format!("{statement} in {:.0}%", 100.0 * f));
    }
    let cells: Vec<String> = report
        .cells
        .iter()
        .map(|c| {
            format!(
                "{} {} V {:.4} σ {:.4}",
                c.config, c.condition, c.mean_visibility, c.mean_sigma_v
            )
        })
        .collect();
    Ok(format!(
        "SMF 0.3 rad (A) vs PMF 0.05 rad (B), 100 reps: {}; {}",
        line.join(", "),
        cells.join(", ")
    ))
}

fn random_unitary(r: &mut impl Rng) -> JonesMatrix {
    let a = rotation(r.random_range(-PI..PI)).unwrap();
    let b = linear_retarder(r.random_range(0.0..TAU), r.random_range(0.0..PI)).unwrap();
    let c = qwp(r.random_range(0.0..PI)).unwrap();
    (a * b * c).scaled_by_phase(r.random_range(0.0..TAU))
}

fn random_state(r: &mut impl Rng) -> BipartiteState {
    let g = Matrix4::from_fn(|_, _| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
    let rho = g * g.adjoint();
    let tr = rho.trace();
    BipartiteState::new(rho / tr).unwrap()
}

fn c9_invariants() -> Check {
    let mut r = draws(9);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |k: &'static str, v: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max(v);
    };
    for _ in 0..2000 {
        let angle = r.random_range(-PI..PI);
        let delta = r.random_range(0.0..TAU);
        let l = r.random_range(0.1..10.0);
        let lambda = if r.random::<bool>() { 810.0 } else { 1550.0 };
        let dn = r.random_range(1e-4..1e-3);
        for m in [
            rotation(angle).unwrap(),
            hwp(angle).unwrap(),
            qwp(angle).unwrap(),
            linear_retarder(delta, angle).unwrap(),
            pmf_jones(&segment(l, lambda, dn).with_axis(angle)),
            cross_pair_exact(
                &CrossAlignedPair::new(
                    segment(l, lambda, dn),
                    r.random_range(-0.5..0.5) * l,
                    angle,
                    delta,
                )
                .unwrap(),
            ),
        ] {
            note("unitarity", m.unitarity_defect());
        }

        let (a, b, c, d) = (
            random_unitary(&mut r),
            random_unitary(&mut r),
            random_unitary(&mut r),
            random_unitary(&mut r),
        );
        let lhs = tensor(&a, &b) * tensor(&c, &d);
        let rhs = tensor(&(a * c), &(b * d));
        note("mixed product", lhs.max_entry_distance(&rhs));

        let rho = random_state(&mut r);
        let comp = CompensationSetting::new(r.random_range(0.0..TAU), r.random_range(0.0..TAU));
        let out = evolve(&rho, &a, &b, &comp).map_err(|e| e.to_string())?;
        note("trace", (out.trace() - C64::new(1.0, 0.0)).norm());
        note("hermiticity", out.hermiticity_defect());
        let lowest = out
            .eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        note("positivity", (-lowest).max(0.0));
        note("purity", (out.purity() - rho.purity()).abs());

        let c_min: f64 = r.random_range(0.0..1000.0);
        let c_max = c_min + r.random_range(1.0..5000.0);
        let (s_max, s_min) = (c_max.sqrt(), c_min.sqrt());
        let k = 10f64.powf(r.random_range(-3.0..3.0));
        let v = visibility(c_max, c_min).unwrap();
        let vk = visibility(k * c_max, k * c_min).unwrap();
        let s = visibility_error(c_max, c_min, s_max, s_min).unwrap();
        let sk = visibility_error(k * c_max, k * c_min, k * s_max, k * s_min).unwrap();
        note("V scale", (v - vk).abs());
        note("sigma_V scale", (s - sk).abs() / s.max(f64::MIN_POSITIVE));
    }

    // Raw and normalized fringes give the same visibility under both methods.
    let axis: Vec<f64> = (0..37).map(|i| 5.0 * f64::from(i)).collect();
    for k in 0..200u64 {
        let params = SourceParams {
            seed: k,
            pump_mw: r.random_range(0.2..5.0),
            ..SourceParams::default()
        };
        let ds = simulate_fringe(
            &FringeSource::State(werner(r.random_range(0.3..1.0))),
            &params,
            r.random_range(0.0..180.0),
            &axis,
            "norm",
            SimulationOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let raw = ds.fringe(Pairing::A1B1);
        let (normed, _) = normalize_counts(&raw).map_err(|e| e.to_string())?;
        for method in [ExtremaMethod::Pointwise, ExtremaMethod::CosineFit] {
            let a = extrema_of(&axis, &raw, method).map_err(|e| e.to_string())?;
            let b = extrema_of(&axis, &normed, method).map_err(|e| e.to_string())?;
            let va = visibility(a.c_max, a.c_min).map_err(|e| e.to_string())?;
            let vb = visibility(b.c_max, b.c_min).map_err(|e| e.to_string())?;
            note("normalization", (va - vb).abs());
        }
    }

    let limits = [
        ("unitarity", 1e-12),
        ("mixed product", 1e-12),
        ("trace", 1e-12),
        ("hermiticity", 1e-12),
        ("positivity", -EIGEN_FLOOR),
        ("purity", 1e-12),
        ("V scale", 1e-12),
        ("sigma_V scale", 1e-12),
        ("normalization", 1e-12),
    ];
    let mut parts = Vec::new();
    for (k, limit) in limits {
        let w = worst.get(k).copied().unwrap_or(f64::NAN);
        ensure(w <= limit, || format!("{k}: {w:e} exceeds {limit:e}"))?;
        parts.push(format!("{k} {w:.1e}"));
    }
    Ok(parts.join(", "))
}

fn files_in(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        out.insert(
            p.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&p).unwrap(),
        );
    }
    out
}

fn run_binary(args: &[&str]) -> Result<PathBuf, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_crosspmf"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout
        .lines()
        .rev()
        .find(|l| l.starts_with("wrote "))
        .ok_or("no output directory")?;
    Ok(PathBuf::from(line.trim_start_matches("wrote ")))
}

fn c10_determinism() -> Check {
    let tmp = std::env::temp_dir().join(format!("crosspmf-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&tmp);
    fs::create_dir_all(&tmp).map_err(|e| e.to_string())?;
    let out = tmp.join("out");
    let write = |name: &str, text: &str| -> PathBuf {
        let p = tmp.join(name);
        fs::write(&p, text).unwrap();
        p
    };
    let sweep = write(
        "sweep.toml",
        "seed = 5\n[sweep]\ntheta_min_deg = -4.0\ntheta_max_deg = 4.0\ntheta_step_deg = 2.0\n\
         phi_min_deg = -4.0\nphi_max_deg = 4.0\nphi_step_deg = 2.0\ndelta_lengths_nm = [-4.0, 0.0, 4.0]\n",
    );
    let smf = write(
        "smf.toml",
        "seed = 5\n[channel]\nfiber = \"smf\"\n[channel.drift]\nsmf_step_rad = 0.3\n",
    );
    let pmf = write(
        "pmf.toml",
        "seed = 5\n[channel.drift]\npmf_phase_jitter_rad = 0.05\n",
    );
    let o = out.to_str().unwrap();

    let mut checked = 0;
    let mut twice = |args: Vec<String>| -> Result<PathBuf, String> {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = run_binary(&args)?;
        let a = files_in(&first);
        let second = run_binary(&args)?;
        ensure(first == second, || {
            format!("{args:?}: output directory changed")
        })?;
        let b = files_in(&second);
        ensure(a == b, || format!("{args:?}: outputs differ between runs"))?;
        checked += a.len();
        Ok(first)
    };
    let s = |x: &str| x.to_string();
    twice(vec![
        s("sweep-fidelity"),
        s("--config"),
        sweep.display().to_string(),
        s("--out"),
        s(o),
    ])?;
    let sim = twice(vec![
        s("simulate-fringe"),
        s("--config"),
        smf.display().to_string(),
        s("--out"),
        s(o),
    ])?;
    let mut analyze = vec![s("analyze"), s("--out"), s(o)];
    for f in files_in(&sim)
        .keys()
        .filter(|k| k.starts_with("fringe_") && k.ends_with(".csv"))
    {
        analyze.push(sim.join(f).display().to_string());
    }
    twice(analyze)?;
    twice(vec![
        s("compare"),
        smf.display().to_string(),
        pmf.display().to_string(),
        s("--repetitions"),
        s("5"),
        s("--out"),
        s(o),
    ])?;
    let _ = fs::remove_dir_all(&tmp);
    Ok(format!(
        "4 commands run twice each, {checked} output files byte-identical"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "self-compensation identity", 1.0, c1_identity),
        (2, "exact product vs closed form", 5.0, c2_closed_form),
        (3, "nine-panel fidelity sweep", 60.0, c3_sweep),
        (4, "first-order approximation regime", 1.0, c4_approx_regime),
        (5, "singlet fringe physics", 1.0, c5_singlet_fringe),
        (6, "counting-model consistency", 10.0, c6_counting),
        (
            7,
            "visibility error vs bootstrap",
            60.0,
            c7_error_propagation,
        ),
        (8, "SMF vs PMF ordering", 300.0, c8_orderings),
        (9, "algebraic invariants", 30.0, c9_invariants),
        (10, "CLI determinism", f64::INFINITY, c10_determinism),
    ];
    let mut failed = 0;
    for (n, name, limit_s, f) in criteria {
        let start = Instant::now();
        let result = f();
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match result {
            Ok(d) if secs <= limit_s => (true, d),
            Ok(d) => (false, format!("{d}; took {secs:.2} s, limit {limit_s} s")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        let limit = if limit_s.is_finite() {
            format!(", limit {limit_s} s")
        } else {
            String::new()
        };
        println!(
            "criterion {n:>2} {}: {name}: {detail} [{secs:.2} s{limit}]",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
