//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use earc::embedding::{build_data_matrices, compression_plan, eth};
use earc::groups::{close_group, lifted_action, window_action, DEFAULT_MATCH_TOL, DEFAULT_MAX_ORDER};
use earc::model::train;
use earc::solver::{equivariant_basis, equivariant_basis_dense, stacked_constraints, unconstrained_fit};
use earc::systems::{
    builtin_rep, competition_generate, competition_step, hamiltonian_energy, hamiltonian_generate, bank_interactions,
    CompetitionConfig, HamiltonianConfig, DEFAULT_GROWTH_RATE,
};
use earc::tensorops::{norm, null_space, null_space_symmetric, projector, DenseMatrix};
use earc::{EarcModel, GroupRep, RolloutMode, SeriesSample, TrainOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Fixture {
    competition: SeriesSample,
    hamiltonian: SeriesSample,
    z5_model: EarcModel,
    z5_time: Duration,
    k4_model: EarcModel,
    k4_time: Duration,
}

fn fixture() -> Fixture {
    let competition = competition_generate(&CompetitionConfig::default()).expect("competition series");
    let hamiltonian = hamiltonian_generate(&HamiltonianConfig::default()).expect("hamiltonian series");
    let opts = TrainOptions::default();

    let start = Instant::now();
    let z5_model = train(
        &competition.prefix(31).unwrap(),
        &builtin_rep("z5").unwrap(),
        1,
        2,
        &opts,
    )
    .expect("z5 training");
    let z5_time = start.elapsed();

    let start = Instant::now();
    let k4_model = train(
        &hamiltonian.prefix(90).unwrap(),
        &builtin_rep("k4").unwrap(),
        5,
        3,
        &opts,
    )
    .expect("k4 training");
    let k4_time = start.elapsed();

    Fixture {
        competition,
        hamiltonian,
        z5_model,
        z5_time,
        k4_model,
        k4_time,
    }
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn residual_criterion(model: &EarcModel, elapsed: Duration, budget: Duration) -> Outcome {
    let delta = model.delta_em().map_err(|e| e.to_string())?;
    let summary = format!(
        "delta_em = {delta:.3e}, stored {:.3e}, M = {}, {:.2?}",
        model.fit().delta_em,
        model.fit().basis_dim,
        elapsed
    );
    ensure(delta <= 1e-10 && model.fit().delta_em <= 1e-10, summary.clone())?;
    ensure(elapsed < budget, format!("{summary}; over the {budget:?} budget"))?;
    Ok(summary)
}

fn crit1(f: &Fixture) -> Outcome {
    residual_criterion(&f.z5_model, f.z5_time, Duration::from_secs(5))
}

fn crit2(f: &Fixture) -> Outcome {
    residual_criterion(&f.k4_model, f.k4_time, Duration::from_secs(60))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn crit3(f: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for (model, lo, hi) in [(&f.z5_model, 0.0, 1.0), (&f.k4_model, -1.0, 1.0)] {
        let nl = model.channels() * model.lag();
        let actions: Vec<DenseMatrix> = model
            .group()
            .elements()
            .iter()
            .map(|g| window_action(g, model.lag()).unwrap())
            .collect();
        for _ in 0..100 {
            let x = random_vec(&mut rng, nl, lo, hi);
            let tx = model.predict_state(&x).unwrap();
            for a in &actions {
                let lhs = model.predict_state(&a.matvec(&x).unwrap()).unwrap();
                let rhs = a.matvec(&tx).unwrap();
                let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(u, v)| u - v).collect();
                let ratio = norm(&diff) / (1.0 + norm(&tx));
                worst = worst.max(ratio);
            }
        }
    }
    let summary = format!("worst ‖T(gx) - gT(x)‖ / (1 + ‖T(x)‖) = {worst:.3e}");
    ensure(worst <= 1e-9, summary.clone())?;
    Ok(summary)
}

fn crit4(_: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for (name, lag, p) in [("k4", 5, 3), ("z5", 1, 2)] {
        let group = builtin_rep(name).unwrap();
        for g in group.elements() {
            let gl = window_action(g, lag).unwrap();
            let lifted = lifted_action(g, lag, p).unwrap();
            for _ in 0..100 {
                let x = random_vec(&mut rng, group.n() * lag, -1.0, 1.0);
                let lhs = eth(&gl.matvec(&x).unwrap(), p).unwrap();
                let rhs = lifted.matvec(&eth(&x, p).unwrap()).unwrap();
                for (u, v) in lhs.iter().zip(&rhs) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
    }
    let summary = format!("max |eth(gx) - G eth(x)| = {worst:.3e}");
    ensure(worst <= 1e-12, summary.clone())?;
    Ok(summary)
}

fn crit5(_: &Fixture) -> Outcome {
    let group = close_group(
        &[DenseMatrix::identity(2).scale(-1.0)],
        DEFAULT_MATCH_TOL,
        DEFAULT_MAX_ORDER,
    )
    .unwrap();
    let plan = compression_plan(2, 1).unwrap();
    let unknowns = 2 * plan.reduced_dim();

    let k = stacked_constraints(&group, 1, &plan).unwrap();
    let stacked = null_space(&k, 1e-10).unwrap();
    let gram = k.transpose().matmul(&k).unwrap();
    let normal = null_space_symmetric(&gram, 1e-10).unwrap();
    let dist = projector(&stacked, unknowns).max_abs_diff(&projector(&normal, unknowns));

    let vecs = |b: &earc::EquivariantBasis| -> Vec<Vec<f64>> {
        b.matrices().iter().map(earc::tensorops::vec).collect()
    };
    let blocked = vecs(&equivariant_basis(&group, 1, &plan, 1e-10).unwrap());
    let dense = vecs(&equivariant_basis_dense(&group, 1, &plan, 1e-10).unwrap());
    let dist_blocked = projector(&blocked, unknowns).max_abs_diff(&projector(&stacked, unknowns));
    let dist_dense = projector(&dense, unknowns).max_abs_diff(&projector(&stacked, unknowns));

    let summary = format!(
        "M = {} (normal-form {}), projector gaps {dist:.1e} / {dist_blocked:.1e} / {dist_dense:.1e}",
        stacked.len(),
        normal.len()
    );
    ensure(
        stacked.len() == 4 && normal.len() == 4 && blocked.len() == 4 && dist.max(dist_blocked).max(dist_dense) <= 1e-8,
        summary.clone(),
    )?;
    Ok(summary)
}

/// i.i.d. uniform samples, so the data matrices are well conditioned and the
/// comparison is not dominated by singular values near the cutoff.
fn noise_series(rng: &mut ChaCha8Rng, len: usize, n: usize) -> SeriesSample {
    let rows: Vec<Vec<f64>> = (0..len).map(|_| random_vec(rng, n, -1.0, 1.0)).collect();
    SeriesSample::from_rows(&rows).unwrap()
}

fn crit6(_: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for (n, len, lag, p) in [(5, 60, 1, 2), (2, 120, 2, 3), (2, 90, 5, 3)] {
        let series = noise_series(&mut rng, len, n);
        let opts = TrainOptions::default();
        let model = train(&series, &GroupRep::trivial(n), lag, p, &opts).map_err(|e| e.to_string())?;
        let (h0r, h1) = build_data_matrices(&series, lag, p, model.plan()).unwrap();
        let eq_pred = model.coupling().matmul(&h0r).unwrap();
        let ls = unconstrained_fit(&h0r, &h1, opts.lstsq_tol).unwrap();
        let ls_pred = ls.matmul(&h0r).unwrap();
        let rel = eq_pred.sub(&ls_pred).unwrap().frobenius_norm() / ls_pred.frobenius_norm();
        worst = worst.max(rel);
        parts.push(format!("n={n} L={lag} p={p}: {rel:.2e}"));
    }
    let summary = format!("relative prediction gap {}", parts.join(", "));
    ensure(worst <= 1e-8, summary.clone())?;
    Ok(summary)
}

fn crit7(f: &Fixture) -> Outcome {
    let seed = f.competition.window_ending_at(30, 1).unwrap();
    let fc = f.z5_model.rollout(&seed, 394, RolloutMode::Consistent).unwrap();
    ensure(!fc.diverged() && fc.steps() == 394, "competition rollout diverged".into())?;
    let last = fc.values.row(393);
    let reference = f.competition.sample(424);
    let final_err = last.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let seed = f.hamiltonian.window_ending_at(89, 5).unwrap();
    let remaining = f.hamiltonian.len() - 90;
    let fc = f.k4_model.rollout(&seed, remaining, RolloutMode::Consistent).unwrap();
    let mut se = 0.0;
    let mut sr = 0.0;
    let mut tracked = 0;
    let mut rmse20 = f64::NAN;
    for k in 0..fc.steps() {
        for (a, b) in fc.values.row(k).iter().zip(f.hamiltonian.sample(90 + k)) {
            se += (a - b) * (a - b);
            sr += b * b;
        }
        let rel = (se / sr).sqrt();
        if k + 1 == 20 {
            rmse20 = rel;
        }
        if rel <= 5e-2 {
            tracked = k + 1;
        } else {
            break;
        }
    }
    let summary = format!(
        "competition final max error {final_err:.2e}; hamiltonian relative RMSE over 20 steps {rmse20:.2e}, within 5e-2 for {tracked}/{remaining} steps"
    );
    ensure(final_err <= 1e-2 && tracked >= 20, summary.clone())?;
    Ok(summary)
}

fn crit8(_: &Fixture) -> Outcome {
    let n = bank_interactions();
    let p_star = vec![1.0 / 3.1; 5];
    let next = competition_step(&p_star, &[DEFAULT_GROWTH_RATE; 5], &n).unwrap();
    let err = next.iter().zip(&p_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let summary = format!("|step(p*) - p*| = {err:.1e} at p* = {:.17}", p_star[0]);
    ensure(err <= 1e-15, summary.clone())?;
    Ok(summary)
}

fn crit9(_: &Fixture) -> Outcome {
    let mut worst: f64 = 0.0;
    for (q0, p0) in [(0.5, 0.0), (0.8, 0.0), (-0.6, 0.1)] {
        let cfg = HamiltonianConfig {
            q0,
            p0,
            dt: 0.01,
            steps: 600,
        };
        let s = hamiltonian_generate(&cfg).unwrap();
        let h0 = hamiltonian_energy(q0, p0);
        for t in 0..s.len() {
            let x = s.sample(t);
            worst = worst.max((hamiltonian_energy(x[0], x[1]) - h0).abs() / h0.abs());
        }
    }
    let summary = format!("max relative energy drift {worst:.2e}");
    ensure(worst <= 1e-8, summary.clone())?;
    Ok(summary)
}

fn crit10(_: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut parts = Vec::new();
    for (m, p) in [(5, 2), (10, 3)] {
        let plan = compression_plan(m, p).unwrap();
        for _ in 0..100 {
            let x = random_vec(&mut rng, m, -2.0, 2.0);
            let full = eth(&x, p).unwrap();
            let back = plan.expand(&plan.reduce(&full).unwrap()).unwrap();
            ensure(back == full, format!("round trip not exact at (nL, p) = ({m}, {p})"))?;
        }
        let re = plan.selection_matrix().matmul(&plan.expansion_matrix()).unwrap();
        ensure(
            re == DenseMatrix::identity(plan.reduced_dim()),
            format!("R E != I at (nL, p) = ({m}, {p})"),
        )?;
        parts.push(format!("({m},{p}): q = {}", plan.reduced_dim()));
    }
    Ok(format!("exact for {}", parts.join(", ")))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_earc"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("earc {} exited {:?}", args.join(" "), out.status.code()));
    }
    Ok(out.stdout)
}

fn cli_pipeline(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let stdout = [
        run_cli(dir, &["generate", "--system", "competition", "--steps", "425", "-o", "series.csv"])?,
        run_cli(
            dir,
            &["train", "--data", "series.csv", "--group", "z5", "--L", "1", "--p", "2", "--train-count", "31", "-o", "model.json"],
        )?,
        run_cli(
            dir,
            &["forecast", "--model", "model.json", "--data", "series.csv", "--horizon", "394", "--reference", "series.csv", "-o", "forecast.csv"],
        )?,
        run_cli(dir, &["verify", "--model", "model.json"])?,
    ];
    let mut outputs: Vec<Vec<u8>> = stdout.into_iter().collect();
    for file in ["series.csv", "model.json", "forecast.csv"] {
        outputs.push(std::fs::read(dir.join(file)).map_err(|e| e.to_string())?);
    }
    Ok(outputs)
}

fn crit11(f: &Fixture) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("k4.json");
    f.k4_model.save(&path).map_err(|e| e.to_string())?;
    let loaded = EarcModel::load(&path).map_err(|e| e.to_string())?;
    let seed = f.hamiltonian.window_ending_at(89, 5).unwrap();
    for mode in [RolloutMode::Consistent, RolloutMode::Free] {
        let a = f.k4_model.rollout(&seed, 100, mode).unwrap();
        let b = loaded.rollout(&seed, 100, mode).unwrap();
        let same = a.values.as_slice().iter().zip(b.values.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits())
            && a.steps() == b.steps();
        ensure(same, format!("{mode:?} rollout differs after reload"))?;
    }
    ensure(loaded.coupling() == f.k4_model.coupling(), "coupling changed on reload".into())?;

    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = cli_pipeline(first.path())?;
    let b = cli_pipeline(second.path())?;
    ensure(a == b, "repeated CLI runs differ".into())?;
    Ok(format!("reload rollouts bitwise equal; {} CLI artifacts byte-identical", a.len()))
}

fn main() {
    let criteria: [(&str, fn(&Fixture) -> Outcome); 11] = [
        ("equivariance residual, competition (Z5, L=1, p=2)", crit1),
        ("equivariance residual, Hamiltonian (K4, L=5, p=3)", crit2),
        ("predictor equivariance on random states", crit3),
        ("embedding intertwines the lifted action", crit4),
        ("stacked kernel equals normal-form kernel", crit5),
        ("trivial group matches unconstrained fit", crit6),
        ("forecast quality", crit7),
        ("competition fixed point", crit8),
        ("RK4 energy drift", crit9),
        ("compression round trip", crit10),
        ("determinism and persistence", crit11),
    ];
    let f = fixture();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| check(&f)))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
