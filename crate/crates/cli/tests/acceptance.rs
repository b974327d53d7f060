//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use dqn_portfolio::agent::{
    compute_target, run_policy, softmax, target_policy, EpsilonSchedule, NetworkLayout, Trainer, TrainingConfig,
};
use dqn_portfolio::baselines::{
    eg_update, pamr_update, simplex_project, strategy_run, BaselineParams, PortfolioWeights, Strategy,
};
use dqn_portfolio::environment::{execute_action, profit, reward, total_value, EnvConfig, PortfolioVector, TradeAction};
use dqn_portfolio::evaluation::mdd;
use dqn_portfolio::market_data::{dataset_from_aligned, AssetSeries, KlineRecord, MarketDataset, MINUTE_MS};
use dqn_portfolio::preprocessing::{BlockStream, PriceVector};
use dqn_portfolio::qnet::gradcheck::{
    activation_gradient_error, conv_gradient_error, dense_gradient_error, network_gradient_error,
};
use dqn_portfolio::qnet::{OptimizerConfig, OutputActivation, QNetSpec, QNetwork};
use dqn_portfolio::synthetic::{alternating_market, DEFAULT_START_MS};
use dqn_portfolio::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_q(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(2..=17);
    let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
    (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

fn gradients() -> Outcome {
    const TOL: f64 = 1e-4;
    let t0 = Instant::now();
    let mut checks = Vec::new();
    for seed in 0..3 {
        checks.push((format!("network sigmoid seed {seed}"), network_gradient_error(OutputActivation::Sigmoid, seed)));
    }
    checks.push(("network linear".into(), network_gradient_error(OutputActivation::Linear, 7)));
    checks.push(("conv unit stride".into(), conv_gradient_error([6, 4, 5, 1], 3, [3, 2, 2], [1, 1, 1], 1)));
    checks.push(("conv strided".into(), conv_gradient_error([9, 5, 6, 2], 4, [3, 3, 2], [2, 1, 2], 2)));
    checks.push(("dense".into(), dense_gradient_error(20, 7, 3)));
    checks.push(("activations".into(), activation_gradient_error(4)));
    let elapsed = t0.elapsed();
    let worst = checks.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    for (name, err) in &checks {
        ensure(*err < TOL, || format!("{name}: relative error {err:e}"))?;
    }
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("max relative error {worst:.2e} over {} checks in {elapsed:.2?}", checks.len()))
}

fn shapes() -> Outcome {
    let spec = QNetSpec::reference(30, 8);
    let expected: Vec<Vec<usize>> = vec![
        vec![30, 8, 9, 1],
        vec![25, 7, 7, 32],
        vec![11, 4, 4, 64],
        vec![5, 2, 2, 64],
        vec![1280],
        vec![512],
        vec![17],
    ];
    let chain = spec.shape_chain().map_err(|e| e.to_string())?;
    ensure(chain == expected, || format!("shape chain {chain:?}"))?;
    let net = QNetwork::new(spec, 0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = Tensor::from_vec(&[30, 8, 9, 1], (0..30 * 8 * 9).map(|_| rng.gen()).collect())
        .map_err(|e| e.to_string())?;
    let pass = net.forward_tensor(input).map_err(|e| e.to_string())?;
    let convs: Vec<Vec<usize>> = pass.conv_outputs().iter().map(|t| t.shape().to_vec()).collect();
    ensure(convs == expected[1..4], || format!("forward conv shapes {convs:?}"))?;
    let flat = pass.conv_outputs()[2].len();
    ensure(flat == 1280, || format!("flatten {flat}"))?;
    ensure(pass.hidden().len() == 512, || format!("fc {}", pass.hidden().len()))?;
    ensure(pass.q_values().len() == 17, || format!("output {}", pass.q_values().len()))?;
    Ok("(25,7,7,32) (11,4,4,64) (5,2,2,64) 1280 512 17".into())
}

fn target_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_greedy, mut worst_mean) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let q = random_q(&mut rng);
        let r = rng.gen_range(-1.0..1.0);
        let gamma = rng.gen_range(0.0..1.0);
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let cold = compute_target(r, &q, false, gamma, 1e-6).map_err(|e| e.to_string())?;
        let hot = compute_target(r, &q, false, gamma, 1e6).map_err(|e| e.to_string())?;
        worst_greedy = worst_greedy.max((cold - (r + gamma * max)).abs());
        worst_mean = worst_mean.max((hot - (r + gamma * mean)).abs());
    }
    ensure(worst_greedy < 1e-6, || format!("greedy limit off by {worst_greedy:e}"))?;
    ensure(worst_mean < 1e-3, || format!("mean limit off by {worst_mean:e}"))?;
    Ok(format!("greedy {worst_greedy:.1e}, mean {worst_mean:.1e}"))
}

fn scale_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q = random_q(&mut rng);
        let tau = rng.gen_range(0.05..2.0);
        let base = target_policy(&q, tau).map_err(|e| e.to_string())?;
        for c in [0.01, 1.0, 100.0] {
            let scaled: Vec<f64> = q.iter().map(|v| c * v).collect();
            let pi = target_policy(&scaled, tau).map_err(|e| e.to_string())?;
            for (a, b) in base.iter().zip(&pi) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure(worst < 1e-9, || format!("weights differ by {worst:e}"))?;

    let q = [1.0, 2.0, 3.0];
    let shifted = [11.0, 12.0, 13.0];
    let a = target_policy(&q, 0.5).map_err(|e| e.to_string())?;
    let b = target_policy(&shifted, 0.5).map_err(|e| e.to_string())?;
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    ensure(gap > 1e-3, || format!("shift by 10 changed weights by only {gap:e}"))?;
    let plain = softmax(&q, 1.0);
    ensure(
        plain.iter().zip(softmax(&shifted, 1.0)).all(|(x, y)| (x - y).abs() < 1e-12),
        || "fixed-temperature softmax should ignore shifts".into(),
    )?;
    Ok(format!("max deviation {worst:.1e}; shift by 10 moves weights by {gap:.3}"))
}

/// Exhaustive maximum over all pairs `t < s` of `drawdown(P_t, P_s)`.
fn brute_mdd(curve: &[f64], drawdown: fn(f64, f64) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..curve.len() {
        for s in t + 1..curve.len() {
            worst = worst.max(drawdown(curve[t], curve[s]));
        }
    }
    worst
}

fn drawdown() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut literal_gap = 0.0f64;
    for i in 0..1000 {
        let n = rng.gen_range(1..=500);
        let mut v = rng.gen_range(1.0..1000.0);
        let curve: Vec<f64> = (0..n)
            .map(|_| {
                v *= rng.gen_range(0.8..1.25f64);
                v
            })
            .collect();
        let (fast, slow) = (mdd(&curve), brute_mdd(&curve, |peak, v| 1.0 - v / peak));
        ensure(fast == slow, || format!("curve {i}: streaming {fast} vs brute force {slow}"))?;
        let literal = brute_mdd(&curve, |peak, v| (peak - v) / peak);
        literal_gap = literal_gap.max((fast - literal).abs());
    }
    ensure(literal_gap < 1e-15, || format!("differs from (P_t - P_s) / P_t by {literal_gap:e}"))?;
    let example = mdd(&[1.0, 1.5, 0.75, 1.2]);
    ensure(example == 0.5, || format!("mdd(1, 1.5, 0.75, 1.2) = {example}"))?;
    Ok(format!("1000 curves exact; {literal_gap:.1e} from the subtractive form; example 0.5"))
}

fn value_neutrality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let m = rng.gen_range(1..=8);
        let amounts: Vec<f64> = (0..=m)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1000.0) })
            .collect();
        let mut prices = vec![1.0];
        prices.extend((0..m).map(|_| 10f64.powf(rng.gen_range(-3.0..4.0))));
        let w = PortfolioVector::new(amounts).map_err(|e| e.to_string())?;
        let p = PriceVector::new(prices).map_err(|e| e.to_string())?;
        let action = TradeAction::from_id(rng.gen_range(0..=2 * m), m, rng.gen()).map_err(|e| e.to_string())?;
        let (next, _) = execute_action(&w, &p, &action, 0.0).map_err(|e| e.to_string())?;
        let before = total_value(&w, &p).map_err(|e| e.to_string())?;
        let after = total_value(&next, &p).map_err(|e| e.to_string())?;
        if before > 0.0 {
            worst = worst.max(((after - before) / before).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("relative value change {worst:e}"))?;
    Ok(format!("max relative change {worst:.1e} over 10000 trades"))
}

fn flat_series(symbol: &str, path: &[f64]) -> AssetSeries {
    let records = path
        .iter()
        .enumerate()
        .map(|(t, &p)| KlineRecord {
            open: p,
            high: p,
            low: p,
            close: p,
            volume: 1.0,
            ..KlineRecord::padding(DEFAULT_START_MS + t as i64 * MINUTE_MS)
        })
        .collect();
    AssetSeries::new(symbol, records).expect("valid series")
}

fn two_assets(a: &[f64], b: &[f64]) -> MarketDataset {
    dataset_from_aligned(vec![flat_series("AUSDT", a), flat_series("BUSDT", b)]).expect("aligned")
}

fn run_profit(ds: &MarketDataset, strategy: Strategy) -> Result<f64, String> {
    let run = strategy_run(ds, strategy, BaselineParams::default()).map_err(|e| e.to_string())?;
    profit(&run.curve).map_err(|e| e.to_string())
}

fn baselines() -> Outcome {
    let pamr = Strategy::Pamr { epsilon: 0.5 };
    let eg = Strategy::Eg { eta: 0.05 };
    // (dataset, strategy, expected profit), each worked by hand
    let cases = [
        (two_assets(&[1.0, 2.0], &[3.0, 6.0]), Strategy::Ubah, 2.0),
        (two_assets(&[1.0, 2.0], &[4.0, 4.0]), Strategy::Ubah, 1.5),
        (two_assets(&[1.0, 2.0, 1.0], &[1.0, 0.5, 1.0]), Strategy::Ubah, 1.0),
        (two_assets(&[1.0, 2.0, 1.0], &[1.0, 0.5, 1.0]), Strategy::Ucrp, 1.5625),
        (two_assets(&[1.0, 1.2], &[1.0, 0.8]), Strategy::Ucrp, 1.0),
        // step 1 at (0.5, 0.5) earns 1.25; PAMR then moves fully into B, which doubles
        (two_assets(&[1.0, 2.0, 1.0], &[1.0, 0.5, 1.0]), pamr, 2.5),
        // relatives (2, 1) from the uniform start
        (two_assets(&[1.0, 2.0], &[1.0, 1.0]), eg, 1.5),
    ];
    for (ds, strategy, expected) in &cases {
        let got = run_profit(ds, *strategy)?;
        ensure(got == *expected, || format!("{strategy} on {:?}: {got} != {expected}", ds.symbols()))?;
    }
    let w = PortfolioWeights::uniform(2);
    let eg_w = eg_update(&w, &[2.0, 1.0], 0.05).map_err(|e| e.to_string())?;
    let e1 = 1.0 / (1.0 + (-0.05f64 / 1.5).exp());
    ensure((eg_w.values()[0] - e1).abs() < 1e-15, || format!("EG weight {}", eg_w.values()[0]))?;
    let pamr_w = pamr_update(&w, &[1.2, 0.8], 0.5).map_err(|e| e.to_string())?;
    ensure(pamr_w.values() == [0.0, 1.0], || format!("PAMR example {:?}", pamr_w.values()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut eg_w = PortfolioWeights::uniform(5);
    let mut pamr_w = PortfolioWeights::uniform(5);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(0.5..1.5)).collect();
        eg_w = eg_update(&eg_w, &x, rng.gen_range(0.0..0.5)).map_err(|e| e.to_string())?;
        pamr_w = pamr_update(&pamr_w, &x, rng.gen_range(0.0..1.5)).map_err(|e| e.to_string())?;
        for w in [&eg_w, &pamr_w] {
            let off = (w.values().iter().sum::<f64>() - 1.0).abs();
            let neg = w.values().iter().copied().fold(0.0f64, |m, v| m.max(-v));
            worst = worst.max(off).max(neg);
        }
        let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        ensure(simplex_project(&v).is_on_simplex(), || format!("projection of {v:?} off the simplex"))?;
    }
    ensure(worst <= 1e-9, || format!("weights leave the simplex by {worst:e}"))?;
    Ok(format!("{} hand cases exact; simplex drift {worst:.1e} over 10000 steps", cases.len()))
}

fn reward_contract() -> Outcome {
    let r = reward(5, 1000.0, 1100.0);
    ensure((r - 0.5).abs() < 1e-12, || format!("reward at ratio 1.1 is {r}"))?;
    for (after, expected) in [(1300.0, 1.0), (700.0, -1.0), (5000.0, 1.0), (1.0, -1.0)] {
        let got = reward(5, 1000.0, after);
        ensure(got == expected, || format!("reward at ratio {} is {got}", after / 1000.0))?;
    }
    let inside = reward(5, 1000.0, 950.0);
    ensure((inside + 0.25).abs() < 1e-12, || format!("reward at ratio 0.95 is {inside}"))?;
    Ok("0.5 at ratio 1.1; clipped to +-1 beyond |eta| = 1".into())
}

const SMOKE_WINDOW: usize = 10;
const SMOKE_TRAIN: usize = 5000;
const SMOKE_TEST: usize = 1000;

fn smoke_config(seed: u64) -> TrainingConfig {
    let mut cfg = TrainingConfig {
        num_assets: 2,
        window: SMOKE_WINDOW,
        update_start: 500,
        annealing_steps: 2000,
        target_sync: 500,
        epochs: 20,
        seed,
        optimizer: OptimizerConfig::default(),
        ..TrainingConfig::default()
    };
    cfg.network.layout = NetworkLayout::Fitted;
    cfg.network.conv_filters = [4, 8, 8];
    cfg.network.hidden_units = 32;
    cfg.network.output = OutputActivation::Linear;
    cfg
}

fn learnability() -> Outcome {
    let t0 = Instant::now();
    let start = DEFAULT_START_MS;
    let split = start + SMOKE_TRAIN as i64 * MINUTE_MS;
    let end = split + SMOKE_TEST as i64 * MINUTE_MS;
    let full = alternating_market(SMOKE_TRAIN + SMOKE_TEST, start).map_err(|e| e.to_string())?;
    let train = full.slice_time(start, split).map_err(|e| e.to_string())?;
    let held_out = full.slice_time(split, end).map_err(|e| e.to_string())?;
    let history = split - (SMOKE_WINDOW as i64 - 1) * MINUTE_MS;
    let test = full.slice_time(history, end).map_err(|e| e.to_string())?;
    let ubah = run_profit(&held_out, Strategy::Ubah)?;

    let env = EnvConfig::default();
    let train_stream = BlockStream::eager(Arc::new(train), SMOKE_WINDOW).map_err(|e| e.to_string())?;
    let test_stream = BlockStream::eager(Arc::new(test), SMOKE_WINDOW).map_err(|e| e.to_string())?;
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let cfg = smoke_config(seed);
        let spec = cfg.network.spec(SMOKE_WINDOW, 2).map_err(|e| e.to_string())?;
        let mut trainer = Trainer::new(cfg, env, spec).map_err(|e| e.to_string())?;
        trainer.train(&train_stream).map_err(|e| e.to_string())?;
        let run = run_policy(trainer.online(), &test_stream, env, 0.0, seed).map_err(|e| e.to_string())?;
        ratios.push(profit(&run.curve).map_err(|e| e.to_string())? / ubah);
    }
    let elapsed = t0.elapsed();
    let wins = ratios.iter().filter(|r| **r >= 1.5).count();
    let listed: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    let summary = format!(
        "{wins}/5 seeds beat 1.5x UBAH ({ubah:.2}); profit/UBAH [{}]; {elapsed:.0?}",
        listed.join(", ")
    );
    ensure(wins >= 4, || summary.clone())?;
    ensure(elapsed < Duration::from_secs(600), || summary.clone())?;
    Ok(summary)
}

fn dqnpm(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dqnpm"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("dqnpm {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn end_to_end(root: &Path, data: &str, config: &str, tag: &str) -> Result<Vec<u8>, String> {
    let model_dir = root.join(format!("model-{tag}"));
    let bt_dir = root.join(format!("bt-{tag}"));
    let model = model_dir.join("model.json");
    let (m, b) = (model_dir.to_str().unwrap_or(""), bt_dir.to_str().unwrap_or(""));
    dqnpm(&["train", "--data", data, "--config", config, "--end", "2021-01-01T05:00:00Z", "--out", m])?;
    dqnpm(&[
        "backtest",
        "--model",
        model.to_str().unwrap_or(""),
        "--data",
        data,
        "--start",
        "2021-01-01T05:00:00Z",
        "--out",
        b,
    ])?;
    let manifest = fs::read(model_dir.join("manifest.json")).map_err(|e| e.to_string())?;
    let mut out = fs::read(bt_dir.join("report.json")).map_err(|e| e.to_string())?;
    out.extend_from_slice(b"\n--\n");
    out.extend(manifest);
    Ok(out)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let data = root.join("data");
    let config = root.join("run.cfg");
    fs::write(
        &config,
        "number_of_assets = 3\nwindow_size = 8\nupdate_start_size = 64\nexploration_annealing_length = 200\n\
         target_network_update_frequency = 50\nnetwork_layout = fitted\nconv_filters = 4,4,4\nhidden_units = 16\n\
         epochs = 2\nseed = 17\n",
    )
    .map_err(|e| e.to_string())?;
    let data_s = data.to_str().unwrap_or("");
    dqnpm(&["synth", "--kind", "random-walk", "--assets", "3", "--minutes", "420", "--seed", "5", "--out", data_s])?;
    let cfg = config.to_str().unwrap_or("");
    let first = end_to_end(root, data_s, cfg, "a")?;
    let second = end_to_end(root, data_s, cfg, "b")?;
    let report_a = fs::read(root.join("bt-a/report.json")).map_err(|e| e.to_string())?;
    let report_b = fs::read(root.join("bt-b/report.json")).map_err(|e| e.to_string())?;
    ensure(report_a == report_b, || "reports differ".into())?;
    ensure(first == second, || "training manifests differ".into())?;
    let curve_a = fs::read(root.join("bt-a/equity.csv")).map_err(|e| e.to_string())?;
    let curve_b = fs::read(root.join("bt-b/equity.csv")).map_err(|e| e.to_string())?;
    ensure(curve_a == curve_b, || "equity curves differ".into())?;
    Ok(format!("two train+backtest runs, identical {}-byte reports", report_a.len()))
}

fn epsilon_schedule() -> Outcome {
    let s = TrainingConfig::default().schedule();
    let expected = EpsilonSchedule {
        initial: 1.0,
        final_value: 0.1,
        annealing_steps: 1_000_000,
    };
    ensure(s == expected, || format!("default schedule {s:?}"))?;
    let n = s.annealing_steps;
    let points = [(0, 1.0), (n, 0.1), (2 * n, 0.1), (n / 2, 0.55)];
    for (step, want) in points {
        let got = s.value(step);
        ensure((got - want).abs() < 1e-12, || format!("epsilon({step}) = {got}, expected {want}"))?;
    }
    Ok("1.0, 0.55, 0.1, 0.1".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient oracle", gradients),
        ("shape chain", shapes),
        ("target-policy limits", target_limits),
        ("scale invariance", scale_invariance),
        ("mdd oracle", drawdown),
        ("value neutrality", value_neutrality),
        ("baseline oracles", baselines),
        ("reward contract", reward_contract),
        ("learnability smoke test", learnability),
        ("determinism", determinism),
        ("epsilon schedule", epsilon_schedule),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        match check() {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
