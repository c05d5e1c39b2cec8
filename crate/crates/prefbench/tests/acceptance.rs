//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one `PASS`/`FAIL` line, then exits non-zero if
//! any failed.

use std::sync::Arc;
use std::time::{Duration, Instant};

use prefbench_core::analysis::stats::{fisher_exact, mann_whitney_u, spearman, spearman_exact, wilcoxon_signed_rank};
use prefbench_core::analysis::{
    best_scaled_likelihood, near_optimal_non_increasing, noiseless_accuracy, partitioned_learning_experiment,
    scaling_grid, PartitionConfig,
};
use prefbench_core::dataset::{
    augment_identifiability, read_dataset, synth_dataset, terminal_sequences, Polarity, PreferenceDataset,
};
use prefbench_core::learning::{train, PreparedDataset, TrainConfig};
use prefbench_core::maps;
use prefbench_core::mdp::{Action, FeatureVector, State, FEATURE_NAMES};
use prefbench_core::planner::{
    generate_candidate_sf_set, maxent_optimal_policy, value_iteration, ReturnBaseline, SuccessorFeatureSet,
    DEFAULT_CANDIDATES, DEFAULT_GAMMA, DEFAULT_TIE_TOL, DEFAULT_TOL,
};
use prefbench_core::preference::{
    pref_prob, regret_d, ModelKind, PreferenceModelSpec, Segment, Values, DEFAULT_TEMPERATURE,
};
use prefbench_core::{GridMap, LinearReward};
use prefbench_service::{router, Service, ServiceConfig};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const GT: LinearReward = LinearReward::GROUND_TRUTH;
const NEAR_OPTIMAL: f64 = 0.9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// Walks the delivery map and checks the features and reward of each step.
fn gt_constants() -> Outcome {
    let map = maps::delivery();
    let constants_ok = GT.0 == [-1.0, -2.0, 1.0, -1.0, 50.0, -50.0];
    let st = |x, y| State { x, y, terminal: false };
    use Action::*;
    // (start, actions, expected per-step rewards)
    let tours: [(State, &[Action], &[f64]); 4] = [
        // white, white+roadblock, white+coin, white, white, brick,
        // brick+roadblock, brick, brick, goal
        (
            st(3, 0),
            &[Right, Down, Down, Right, Right, Right, Right, Up, Up, Right],
            &[-1.0, -2.0, 0.0, -1.0, -1.0, -2.0, -3.0, -2.0, -2.0, 50.0],
        ),
        // white, sheep
        (st(3, 5), &[Right, Up, Right], &[-1.0, -1.0, -50.0]),
        // bump into a house pays the current surface, then brick+coin
        (
            st(2, 4),
            &[Right, Down, Right, Right, Right, Right, Right, Up],
            &[-1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0],
        ),
        // two coins on white road, then plain white
        (st(0, 2), &[Down, Right, Up], &[0.0, 0.0, -1.0]),
    ];
    let mut steps = 0;
    let mut mismatches = Vec::new();
    for (start, actions, rewards) in tours {
        let mut s = start;
        for (a, want) in actions.iter().zip(rewards) {
            let t = match map.step(&s, *a) {
                Ok(t) => t,
                Err(e) => return outcome(false, format!("step from {s:?}: {e}")),
            };
            let got = GT.reward(&t.phi);
            if got != *want || got.fract() != 0.0 {
                mismatches.push(format!("{s:?} {a}: {got} != {want}"));
            }
            s = t.next;
            steps += 1;
        }
    }
    // Each component once, in isolation.
    let unit_ok = (0..6).all(|f| GT.reward(&FeatureVector::unit(f)) == GT.0[f]);
    outcome(
        constants_ok && unit_ok && mismatches.is_empty(),
        format!(
            "weights {:?} for {:?}; {steps} scripted steps, {} mismatches {mismatches:?}",
            GT.0,
            FEATURE_NAMES,
            mismatches.len()
        ),
    )
}

fn regret_identities() -> Outcome {
    let started = Instant::now();
    let map = maps::delivery();
    let vt = value_iteration(&map, &GT, DEFAULT_GAMMA, DEFAULT_TOL).unwrap();
    let pi = maxent_optimal_policy(&vt, DEFAULT_TIE_TOL);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let starts = map.start_states();
    let mut worst_regret: f64 = 0.0;
    for _ in 0..100 {
        let mut s = *starts.choose(&mut rng).unwrap();
        let start = s;
        let mut actions = Vec::new();
        while actions.len() < 3 && !s.terminal {
            let probs = pi.probs_at(&s);
            let best: Vec<usize> = (0..4).filter(|&a| probs[a] > 0.0).collect();
            let a = Action::ALL[*best.choose(&mut rng).unwrap()];
            actions.push(a);
            s = map.step(&s, a).unwrap().next;
        }
        let seg = Segment::from_actions(&map, start, &actions).unwrap();
        worst_regret = worst_regret.max(regret_d(&seg, &GT, &vt).unwrap().abs());
    }

    let mut terminal_pairs = Vec::new();
    for s in map.start_states() {
        let mut seqs = terminal_sequences(&map, s, Polarity::Positive);
        seqs.extend(terminal_sequences(&map, s, Polarity::Negative));
        let segs: Vec<Segment> = seqs.iter().map(|a| Segment::from_actions(&map, s, a).unwrap()).collect();
        for a in &segs {
            for b in &segs {
                terminal_pairs.push((a.clone(), b.clone()));
            }
        }
    }
    let mut worst_gap: f64 = 0.0;
    for _ in 0..100 {
        let (a, b) = terminal_pairs.choose(&mut rng).unwrap();
        let scale = rng.random_range(0.01..1.0);
        let pr = pref_prob(&PreferenceModelSpec::boltzmann(ModelKind::PartialReturn, scale), a, b, &GT, Values::None);
        let rg = pref_prob(&PreferenceModelSpec::boltzmann(ModelKind::Regret, scale), a, b, &GT, Values::Exact(&vt));
        worst_gap = worst_gap.max((pr.unwrap() - rg.unwrap()).abs());
    }
    let elapsed = started.elapsed();
    outcome(
        worst_regret <= 0.5 && worst_gap <= 1e-12 && elapsed < Duration::from_secs(10),
        format!(
            "max |regret| {worst_regret:.3e} (<= 0.5), max |P_regret - P_pr| {worst_gap:.1e} (<= 1e-12), {}",
            secs(elapsed)
        ),
    )
}

fn gradient_check(map: &GridMap, sfs: &SuccessorFeatureSet) -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for model in [ModelKind::PartialReturn, ModelKind::Regret] {
        for point in 0..20 {
            let d = synth_dataset(map, &GT, &PreferenceModelSpec::boltzmann(model, 0.1), 43, 7, 100 + point).unwrap();
            let prepared = PreparedDataset::new(&d, model, Some(sfs)).unwrap();
            let loss = |w: &LinearReward| prepared.loss_and_gradient(w, Some(sfs), DEFAULT_TEMPERATURE);
            let w = LinearReward(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
            let (_, grad) = loss(&w);
            let fd: [f64; 6] = std::array::from_fn(|f| {
                let (mut up, mut down) = (w, w);
                up.0[f] += h;
                down.0[f] -= h;
                (loss(&up).0 - loss(&down).0) / (2.0 * h)
            });
            let norm = |v: &[f64; 6]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: [f64; 6] = std::array::from_fn(|i| grad[i] - fd[i]);
            let scale = norm(&grad).max(norm(&fd));
            worst = worst.max(if scale == 0.0 { 0.0 } else { norm(&diff) / scale });
        }
    }
    let elapsed = started.elapsed();
    outcome(
        worst <= 1e-4 && elapsed < Duration::from_secs(30),
        format!("max relative error {worst:.2e} (<= 1e-4) over 2 models x 20 points x 50 samples, {}", secs(elapsed)),
    )
}

fn near_optimal_seeds(
    map: &GridMap,
    baseline: &ReturnBaseline,
    data: &[PreferenceDataset],
    model: ModelKind,
    sfs: Option<&SuccessorFeatureSet>,
) -> (usize, Vec<f64>) {
    let returns: Vec<f64> = data
        .iter()
        .enumerate()
        .map(|(seed, d)| {
            let r = train(d, &TrainConfig::for_model(model).with_seed(seed as u64), map, sfs).unwrap();
            baseline.evaluate(map, &r.weights).unwrap()
        })
        .collect();
    (returns.iter().filter(|r| **r >= NEAR_OPTIMAL).count(), returns)
}

fn fmt_returns(r: &[f64]) -> String {
    let parts: Vec<String> = r.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn closed_loop_regret(map: &GridMap, sfs: &SuccessorFeatureSet, baseline: &ReturnBaseline) -> Outcome {
    let started = Instant::now();
    let spec = PreferenceModelSpec::noiseless(ModelKind::Regret);
    let data: Vec<PreferenceDataset> = (0..10).map(|s| synth_dataset(map, &GT, &spec, 428, 72, s).unwrap()).collect();
    let (hits, returns) = near_optimal_seeds(map, baseline, &data, ModelKind::Regret, Some(sfs));
    let elapsed = started.elapsed();
    outcome(
        hits >= 8 && elapsed < Duration::from_secs(600),
        format!("{hits}/10 seeds >= 0.9 (need 8), normalized returns {}, {}", fmt_returns(&returns), secs(elapsed)),
    )
}

fn closed_loop_partial_return(map: &GridMap, baseline: &ReturnBaseline) -> Outcome {
    let spec = PreferenceModelSpec::noiseless(ModelKind::PartialReturn);
    let with: Vec<PreferenceDataset> = (0..10).map(|s| synth_dataset(map, &GT, &spec, 428, 72, s).unwrap()).collect();
    let without: Vec<PreferenceDataset> = with.iter().map(PreferenceDataset::without_terminal_pairs).collect();
    let augmented: Vec<PreferenceDataset> =
        without.iter().enumerate().map(|(s, d)| augment_identifiability(d, map, &GT, 50, s as u64).unwrap()).collect();
    let pr = ModelKind::PartialReturn;
    let (n_with, r_with) = near_optimal_seeds(map, baseline, &with, pr, None);
    let (n_without, _) = near_optimal_seeds(map, baseline, &without, pr, None);
    let (n_aug, _) = near_optimal_seeds(map, baseline, &augmented, pr, None);
    let recovery = n_with >= 8;
    let ablation = n_without < n_with && n_aug + 1 >= n_with;
    outcome(
        recovery && ablation,
        format!(
            "{n_with}/10 seeds >= 0.9 (need 8), returns {}; ablation: without terminal pairs {n_without}/10 \
             (need < {n_with}), +50 identifiability {n_aug}/10 (need >= {})",
            fmt_returns(&r_with),
            n_with.saturating_sub(1)
        ),
    )
}

/// Relative agreement to 12 significant digits.
fn same_digits(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn scaling_grid_check(map: &GridMap) -> Outcome {
    let grid = scaling_grid().params;
    let mut formula_ok = grid.len() == 25 && grid[24] == 0.0;
    for n in 0..12 {
        let p = 0.01 * 1.236f64.powi(n as i32);
        formula_ok &= same_digits(grid[n], p) && same_digits(grid[12 + n], -p);
    }
    // Boltzmann partial-return annotators at every positive grid scale.
    let mut worst = (f64::INFINITY, 0.0);
    let mut rates = Vec::new();
    for &scale in &grid[..12] {
        let spec = PreferenceModelSpec::boltzmann(ModelKind::PartialReturn, scale);
        let hits = (0..100u64)
            .filter(|rep| {
                let d = synth_dataset(map, &GT, &spec, 428, 72, 10_000 + rep).unwrap();
                best_scaled_likelihood(&d, ModelKind::PartialReturn, &GT, None).unwrap().best_scale == scale
            })
            .count();
        let rate = hits as f64 / 100.0;
        rates.push(format!("{rate:.2}"));
        if rate < worst.0 {
            worst = (rate, scale);
        }
    }
    outcome(
        formula_ok && worst.0 >= 0.9,
        format!(
            "25 values match a*r^(n-1) and 0: {formula_ok}; recovery over 100 x 500 pairs per scale [{}], \
             worst {:.2} at {:.5} (need >= 0.90)",
            rates.join(", "),
            worst.0,
            worst.1
        ),
    )
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let below = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn u_pairwise(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .flat_map(|a| {
            y.iter().map(move |b| {
                if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                }
            })
        })
        .sum()
}

fn mw_oracle(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let mean = (x.len() * y.len()) as f64 / 2.0;
    let observed = (u_pairwise(x, y) - mean).abs();
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << pooled.len()) {
        if mask.count_ones() as usize != x.len() {
            continue;
        }
        let a: Vec<f64> = (0..pooled.len()).filter(|i| mask & (1 << i) != 0).map(|i| pooled[i]).collect();
        let b: Vec<f64> = (0..pooled.len()).filter(|i| mask & (1 << i) == 0).map(|i| pooled[i]).collect();
        total += 1;
        hit += u64::from((u_pairwise(&a, &b) - mean).abs() >= observed - 1e-9);
    }
    hit as f64 / total as f64
}

fn wilcoxon_oracle(pairs: &[(f64, f64)]) -> f64 {
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let ranks = average_ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let total: f64 = ranks.iter().sum();
    let observed: f64 = (0..d.len()).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let obs = (observed - total / 2.0).abs();
    let hit = (0u32..(1 << d.len()))
        .filter(|mask| {
            let wp: f64 = (0..d.len()).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            (wp - total / 2.0).abs() >= obs - 1e-9
        })
        .count();
    hit as f64 / (1u64 << d.len()) as f64
}

fn choose(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |c, i| c * (n - i) as u128 / (i + 1) as u128)
}

fn fisher_oracle(t: [[u64; 2]; 2]) -> f64 {
    let (r1, r2, c1) = (t[0][0] + t[0][1], t[1][0] + t[1][1], t[0][0] + t[1][0]);
    let weight = |a: u64| choose(r1, a) * choose(r2, c1 - a);
    let obs = weight(t[0][0]);
    let (mut hit, mut total) = (0u128, 0u128);
    for a in 0..=r1.min(c1) {
        if c1 - a > r2 {
            continue;
        }
        let w = weight(a);
        total += w;
        if w <= obs {
            hit += w;
        }
    }
    hit as f64 / total as f64
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else { return false };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn spearman_oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let rho = pearson(&rx, &ry);
    let mut idx: Vec<usize> = (0..y.len()).collect();
    let (mut hit, mut total) = (0u64, 0u64);
    loop {
        let perm: Vec<f64> = idx.iter().map(|&i| ry[i]).collect();
        total += 1;
        hit += u64::from(pearson(&rx, &perm).abs() >= rho.abs() - 1e-9);
        if !next_permutation(&mut idx) {
            break;
        }
    }
    (rho, hit as f64 / total as f64)
}

fn statistics_oracles() -> Outcome {
    const EXACT: f64 = 1e-10;
    const PERMS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let tied = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0..6) as f64).collect() };
    let mut failures = Vec::new();
    let mut worst_exact: f64 = 0.0;

    for trial in 0..40 {
        let n1 = rng.random_range(1..=6);
        let n2 = rng.random_range(1..=(12 - n1));
        let (x, y) = if trial % 2 == 0 {
            (tied(&mut rng, n1), tied(&mut rng, n2))
        } else {
            ((0..n1).map(|_| rng.random::<f64>()).collect(), (0..n2).map(|_| rng.random::<f64>() + 0.3).collect())
        };
        let r = mann_whitney_u(&x, &y).unwrap();
        let gap = (r.p_value - mw_oracle(&x, &y)).abs();
        worst_exact = worst_exact.max(gap);
        if !r.exact || gap > EXACT || r.statistic != u_pairwise(&x, &y) {
            failures.push(format!("mann-whitney x={x:?} y={y:?}"));
        }
    }
    for trial in 0..30 {
        let n = if trial < 3 { 20 } else { rng.random_range(1..=14) };
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0..5) as f64, rng.random_range(0..4) as f64 + 0.5 * (trial % 2) as f64))
            .collect();
        let Ok(r) = wilcoxon_signed_rank(&pairs) else { continue };
        let gap = (r.p_value - wilcoxon_oracle(&pairs)).abs();
        worst_exact = worst_exact.max(gap);
        if !r.exact || gap > EXACT {
            failures.push(format!("wilcoxon {pairs:?}"));
        }
    }
    let mut tables = 0;
    for n in 1..=40u64 {
        for a in (0..=n).step_by(3) {
            for b in (0..=n - a).step_by(2) {
                let rest = n - a - b;
                for c in [0, rest / 3, rest / 2, rest] {
                    let t = [[a, b], [c, rest - c]];
                    let gap = (fisher_exact(t).unwrap() - fisher_oracle(t)).abs();
                    worst_exact = worst_exact.max(gap);
                    tables += 1;
                    if gap > EXACT {
                        failures.push(format!("fisher {t:?}"));
                    }
                }
            }
        }
    }
    let anchor = fisher_exact([[10, 0], [0, 10]]).unwrap();
    if (anchor - 2.0 / 184_756.0).abs() > 1e-18 {
        failures.push(format!("fisher [[10,0],[0,10]] = {anchor}"));
    }
    for trial in 0..8 {
        let n = 3 + trial;
        let x: Vec<f64> = if trial % 2 == 0 { tied(&mut rng, n) } else { (0..n).map(|i| i as f64).collect() };
        let y: Vec<f64> = (0..n).map(|i| x[i] * 0.5 + rng.random_range(0..4) as f64).collect();
        let Ok(r) = spearman_exact(&x, &y) else { continue };
        let (rho, p) = spearman_oracle(&x, &y);
        let gap = (r.p_value - p).abs().max((r.statistic - rho).abs());
        worst_exact = worst_exact.max(gap);
        if gap > EXACT {
            failures.push(format!("spearman x={x:?} y={y:?}"));
        }
    }

    // Normal and t approximations at n = 30 against permutation tests.
    let mut approx = Vec::new();
    let x: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = (0..15).map(|_| rng.random::<f64>() + 0.25).collect();
    let mut pooled: Vec<f64> = x.iter().chain(&y).copied().collect();
    let mean = 112.5;
    let obs = (u_pairwise(&x, &y) - mean).abs();
    let hit = (0..PERMS)
        .filter(|_| {
            pooled.shuffle(&mut rng);
            let (a, b) = pooled.split_at(15);
            (u_pairwise(a, b) - mean).abs() >= obs - 1e-9
        })
        .count();
    approx.push(("mann-whitney", mann_whitney_u(&x, &y).unwrap().p_value, hit as f64 / PERMS as f64));

    let pairs: Vec<(f64, f64)> = (0..30).map(|_| (rng.random::<f64>() + 0.15, rng.random::<f64>())).collect();
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let total: f64 = ranks.iter().sum();
    let obs = (d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum::<f64>() - total / 2.0).abs();
    let hit = (0..PERMS)
        .filter(|_| {
            let wp: f64 = ranks.iter().filter(|_| rng.random::<bool>()).sum();
            (wp - total / 2.0).abs() >= obs - 1e-9
        })
        .count();
    approx.push(("wilcoxon", wilcoxon_signed_rank(&pairs).unwrap().p_value, hit as f64 / PERMS as f64));

    let x: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = x.iter().map(|v| v * 0.4 + rng.random::<f64>()).collect();
    let (rx, mut ry) = (average_ranks(&x), average_ranks(&y));
    let obs = pearson(&rx, &ry).abs();
    let hit = (0..PERMS)
        .filter(|_| {
            ry.shuffle(&mut rng);
            pearson(&rx, &ry).abs() >= obs - 1e-9
        })
        .count();
    approx.push(("spearman", spearman(&x, &y).unwrap().p_value, hit as f64 / PERMS as f64));

    let worst_approx = approx.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
    let summary: Vec<String> = approx.iter().map(|(n, a, b)| format!("{n} {a:.4} vs {b:.4}")).collect();
    outcome(
        failures.is_empty() && worst_approx <= 0.01,
        format!(
            "exact: max gap {worst_exact:.1e} (<= 1e-10) incl. {tables} Fisher tables, fisher [[10,0],[0,10]] = {anchor:.6e}; \
             n=30: {} (<= 0.01); failures {failures:?}",
            summary.join(", ")
        ),
    )
}

fn partition_harness(map: &GridMap, sfs: &SuccessorFeatureSet) -> Outcome {
    let started = Instant::now();
    let d = synth_dataset(map, &GT, &PreferenceModelSpec::noiseless(ModelKind::Regret), 428, 72, 0).unwrap();
    let cfg = PartitionConfig::standard(TrainConfig::regret());
    let first = partitioned_learning_experiment(&d, &cfg, map, &GT, Some(sfs)).unwrap();
    let second = partitioned_learning_experiment(&d, &cfg, map, &GT, Some(sfs)).unwrap();
    let monotone = near_optimal_non_increasing(&first.summaries);
    let nested = first.summaries.iter().all(|s| s.near_optimal <= s.better_than_random);
    let deterministic = first == second;
    let curve: Vec<String> =
        first.summaries.iter().map(|s| format!("{}:{:.3}", s.partition_count, s.near_optimal)).collect();
    outcome(
        monotone && nested && deterministic,
        format!(
            "near-optimal by partition count [{}], non-increasing (+/-1 partition): {monotone}, \
             rerun identical: {deterministic}, {} for two runs",
            curve.join(", "),
            secs(started.elapsed())
        ),
    )
}

fn respond(vt_cache: &mut Vec<(String, prefbench_core::planner::ValueTable)>, next: &Value) -> Option<Value> {
    let item = &next["item"];
    let id = item["item_id"].clone();
    let item_map =
        || GridMap::parse(item["map"]["name"].as_str().unwrap(), item["map"]["text"].as_str().unwrap()).unwrap();
    let segment = |m: &GridMap, v: &Value| {
        let start: State = serde_json::from_value(v["start"].clone()).unwrap();
        let actions: Vec<Action> = serde_json::from_value(v["actions"].clone()).unwrap();
        Segment::from_actions(m, start, &actions).unwrap()
    };
    let mut values = |m: &GridMap| {
        if let Some((_, vt)) = vt_cache.iter().find(|(f, _)| *f == m.fingerprint()) {
            return vt.clone();
        }
        let vt = value_iteration(m, &GT, DEFAULT_GAMMA, DEFAULT_TOL).unwrap();
        vt_cache.push((m.fingerprint(), vt.clone()));
        vt
    };
    match item["kind"].as_str()? {
        "page" => Some(json!({ "item_id": id, "kind": "ack" })),
        "exercise" => {
            let m = item_map();
            let s = segment(&m, &item["segment"]);
            let vt = values(&m);
            let pr = prefbench_core::preference::partial_return(&s, &GT);
            let value = match item["statistic"].as_str()? {
                "score_so_far" => pr,
                "biggest_possible_score_increase" => vt.value(&s.end()),
                _ => pr + vt.value(&s.end()),
            };
            Some(json!({ "item_id": id, "kind": "value", "value": value }))
        }
        "pair" => {
            // A careful regret-following annotator.
            let m = item_map();
            let (a, b) = (segment(&m, &item["segments"][0]), segment(&m, &item["segments"][1]));
            let vt = values(&m);
            let (ra, rb) = (regret_d(&a, &GT, &vt).unwrap(), regret_d(&b, &GT, &vt).unwrap());
            let choice = if (ra - rb).abs() <= 1e-6 {
                "same"
            } else if ra < rb {
                "first"
            } else {
                "second"
            };
            Some(json!({ "item_id": id, "kind": "preference", "choice": choice }))
        }
        _ => None,
    }
}

async fn service_protocol() -> Outcome {
    let started = Instant::now();
    let svc = Arc::new(Service::new(ServiceConfig::default()).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let server = axum::serve(listener, router(svc.clone()));
    tokio::spawn(async move { server.await.unwrap() });
    let http = reqwest::Client::new();
    let condition = "trained-regret";

    let created: Value = http
        .post(format!("{base}/sessions"))
        .json(&json!({ "condition": condition }))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let id = created["session_id"].as_str().unwrap().to_string();
    let token = created["token"].as_str().unwrap().to_string();
    let map = maps::delivery();
    let mut cache = Vec::new();
    let mut per_stage: Vec<(String, usize)> = Vec::new();
    loop {
        let next: Value = http
            .get(format!("{base}/sessions/{id}/next"))
            .bearer_auth(&token)
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let Some(body) = respond(&mut cache, &next) else { break };
        let stage = next["stage"].as_str().unwrap().to_string();
        match per_stage.last_mut() {
            Some((s, n)) if *s == stage => *n += 1,
            _ => per_stage.push((stage, 1)),
        }
        let resp =
            http.post(format!("{base}/sessions/{id}/responses")).bearer_auth(&token).json(&body).send().await.unwrap();
        if !resp.status().is_success() {
            return outcome(false, format!("response rejected: {}", resp.text().await.unwrap()));
        }
    }
    let count = |s: &str| per_stage.iter().filter(|(n, _)| n == s).map(|(_, c)| *c).sum::<usize>();
    let order: Vec<&str> = per_stage.iter().map(|(s, _)| s.as_str()).collect();
    let expected_order = [
        "domain_teaching",
        "statistic_teaching",
        "practice_1",
        "instructed_example",
        "practice_2",
        "anti_guidance",
        "practice_3",
        "elicitation",
    ];
    let flow_ok = order == expected_order
        && count("practice_1") == 6
        && count("practice_2") == 6
        && count("practice_3") == 6
        && count("elicitation") == 50;

    let survey = prefbench_service::survey::full_credit_answers(prefbench_service::Experiment::Trained);
    let mut survey = serde_json::to_value(survey).unwrap();
    survey["likert"] = json!({ "agreement": 6, "explanations_helpful": 6 });
    let scored: Value = http
        .post(format!("{base}/sessions/{id}/survey"))
        .bearer_auth(&token)
        .json(&survey)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let filter: Value = http
        .get(format!("{base}/sessions/{id}/filter"))
        .bearer_auth(&token)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let text = http.get(format!("{base}/conditions/{condition}/export")).send().await.unwrap().text().await.unwrap();
    let elapsed = started.elapsed();

    let ingest = read_dataset(&map, text.as_bytes()).map_err(|e| e.to_string()).and_then(|d| {
        let vt = value_iteration(&map, &GT, DEFAULT_GAMMA, DEFAULT_TOL).unwrap();
        let acc = noiseless_accuracy(&d, ModelKind::Regret, &GT, Some(&vt)).map_err(|e| e.to_string())?;
        let fit = best_scaled_likelihood(&d, ModelKind::Regret, &GT, Some(&vt)).map_err(|e| e.to_string())?;
        Ok((d.len(), acc, fit.best_scale))
    });
    let score_ok = scored["score"] == 6.0 && scored["max_score"] == 6.0 && scored["passed"] == true;
    let kept = filter["keep"] == true && filter["attention_passed"] == true;
    let detail = format!(
        "stages {order:?} with 6+6+6 practice and {} elicitations: {flow_ok}; survey {}/{} passed {}; kept {kept}; \
         export ingest {ingest:?} (samples, regret accuracy, best scale); {}",
        count("elicitation"),
        scored["score"],
        scored["max_score"],
        scored["passed"],
        secs(elapsed)
    );
    let ingested = matches!(ingest, Ok((n, acc, _)) if n > 0 && acc == 1.0);
    outcome(flow_ok && score_ok && kept && ingested && elapsed < Duration::from_secs(60), detail)
}

fn main() {
    let map = maps::delivery();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    report("gt-reward-constants", gt_constants());
    report("regret-identities", regret_identities());

    let t = Instant::now();
    let sfs = generate_candidate_sf_set(&map, DEFAULT_CANDIDATES, 0).unwrap();
    println!("      (candidate successor features: {} policies in {})", sfs.len(), secs(t.elapsed()));
    let baseline = ReturnBaseline::new(&map, &GT).unwrap();

    report("gradient-correctness", gradient_check(&map, &sfs));
    report("closed-loop-regret", closed_loop_regret(&map, &sfs, &baseline));
    report("closed-loop-partial-return", closed_loop_partial_return(&map, &baseline));
    report("scaling-grid", scaling_grid_check(&map));
    report("statistics-oracles", statistics_oracles());
    report("partitioned-experiment", partition_harness(&map, &sfs));
    let runtime = tokio::runtime::Runtime::new().unwrap();
    report("service-protocol", runtime.block_on(service_protocol()));

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
