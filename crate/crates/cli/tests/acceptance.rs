//! Acceptance suite. Each criterion is checked against an oracle written here,
//! independently of the library code, and reported as one PASS/FAIL line.
//! The process exits non-zero if any criterion fails.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use bcbof::bicluster::{bcbof, BcbofConfig};
use bcbof::clustering::dbscan;
use bcbof::factor::{varimax_rotate, VarimaxOptions};
use bcbof::indicators::trend_level;
use bcbof::metrics::{mar, msa, msr, relevance_index, smsr, standardize_bicluster, var_metric, virtual_error, SigmaKind};
use bcbof::ohlcv::{Bar, OhlcvSeries};
use bcbof::pipeline::{apply, train, ybar_series, TrainConfig};
use bcbof::strategy::{
    backtest_profit, buy_and_hold_profit, pso_optimize_threshold, simulate, Fill, RuleId, Signal, SignalKind,
    StrategyParams, Trade,
};
use bcbof::synth::{planted_additive, synthetic_market, MarketSpec, PlantedSpec};
use bcbof::DataMatrix;
use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric-oracle equivalence", c1_metric_oracle),
        ("delta-bicluster fidelity", c2_delta_fidelity),
        ("planted-bicluster recovery", c3_planted_recovery),
        ("varimax correctness", c4_varimax),
        ("DBSCAN equivalence", c5_dbscan),
        ("trend-table conformance", c6_trend_table),
        ("trading-rule audit", c7_trading_audit),
        ("PSO quality", c8_pso),
        ("profit formula", c9_profit),
        ("end-to-end determinism and speed", c10_end_to_end),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2}s]", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- oracles

/// Plain nested-vector submatrix.
fn block(x: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&i| cols.iter().map(|&j| x[i][j]).collect()).collect()
}

fn row_means(a: &[Vec<f64>]) -> Vec<f64> {
    a.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect()
}

fn col_means(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len() as f64;
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

fn grand_mean(a: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    let mut n = 0.0;
    for r in a {
        for v in r {
            s += v;
            n += 1.0;
        }
    }
    s / n
}

struct NaiveMetrics {
    msr: f64,
    var: f64,
    mar: f64,
    smsr: f64,
    ri: Vec<f64>,
    msa: f64,
    ve: f64,
}

fn naive_metrics(x: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> NaiveMetrics {
    let a = block(x, rows, cols);
    let (ri_m, cj_m, all) = (row_means(&a), col_means(&a), grand_mean(&a));
    let cells = (rows.len() * cols.len()) as f64;
    let (mut sq, mut abs, mut var, mut sm) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in 0..a[i].len() {
            let r = a[i][j] - ri_m[i] - cj_m[j] + all;
            sq += r * r;
            abs += r.abs();
            var += (a[i][j] - all).powi(2);
            let num = ri_m[i] * cj_m[j] - a[i][j] * all;
            sm += num * num / (ri_m[i].powi(2) * cj_m[j].powi(2));
        }
    }

    let ri = cols
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let global: Vec<f64> = x.iter().map(|r| r[j]).collect();
            let local: Vec<f64> = a.iter().map(|r| r[k]).collect();
            1.0 - pop_var(&local) / pop_var(&global)
        })
        .collect();

    // row standardization, population sigma
    let z: Vec<Vec<f64>> = a
        .iter()
        .map(|r| {
            let m = r.iter().sum::<f64>() / r.len() as f64;
            let s = pop_var(r).sqrt();
            r.iter().map(|v| (v - m) / s).collect()
        })
        .collect();
    let mut msa = 0.0;
    for j in 0..cols.len() - 1 {
        let range = |c: usize| {
            let mut hi = f64::MIN;
            let mut lo = f64::MAX;
            for r in &z {
                hi = hi.max(r[c]);
                lo = lo.min(r[c]);
            }
            hi - lo
        };
        msa += ((range(j) + range(j + 1)) / 2.0).abs();
    }
    let p = col_means(&z);
    let pm = p.iter().sum::<f64>() / p.len() as f64;
    let ps = pop_var(&p).sqrt();
    let mut ve = 0.0;
    for r in &z {
        for j in 0..r.len() {
            ve += (r[j] - (p[j] - pm) / ps).abs();
        }
    }
    NaiveMetrics {
        msr: sq / cells,
        var,
        mar: abs / cells,
        smsr: sm / cells,
        ri,
        msa,
        ve: ve / cells,
    }
}

fn pop_var(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn naive_msr(x: &DataMatrix, rows: &[usize], cols: &[usize]) -> f64 {
    let a: Vec<Vec<f64>> = rows.iter().map(|&i| cols.iter().map(|&j| x.get(i, j)).collect()).collect();
    let (r, c, all) = (row_means(&a), col_means(&a), grand_mean(&a));
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a[i].len() {
            s += (a[i][j] - r[i] - c[j] + all).powi(2);
        }
    }
    s / (rows.len() * cols.len()) as f64
}

fn to_matrix(x: &[Vec<f64>]) -> DataMatrix {
    let (n, p) = (x.len(), x[0].len());
    DataMatrix::from_values(Array2::from_shape_fn((n, p), |(i, j)| x[i][j])).unwrap()
}

// ---------------------------------------------------------------- criteria

fn c1_metric_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let x: Vec<Vec<f64>> = (0..50).map(|_| (0..20).map(|_| rng.gen_range(0.05..1.0)).collect()).collect();
        let nr = rng.gen_range(2..=50);
        let nc = rng.gen_range(2..=20);
        let mut rows = sample(&mut rng, 50, nr).into_vec();
        let mut cols = sample(&mut rng, 20, nc).into_vec();
        rows.sort_unstable();
        cols.sort_unstable();

        let m = to_matrix(&x);
        let want = naive_metrics(&x, &rows, &cols);
        let z = standardize_bicluster(&m, &rows, &cols, SigmaKind::Population).map_err(|e| e.to_string())?;
        let ri = relevance_index(&m, &rows, &cols).map_err(|e| e.to_string())?;
        let want_ri_mean = want.ri.iter().sum::<f64>() / want.ri.len() as f64;
        let pairs = [
            ("msr", msr(&m, &rows, &cols).unwrap(), want.msr),
            ("var", var_metric(&m, &rows, &cols).unwrap(), want.var),
            ("mar", mar(&m, &rows, &cols).unwrap(), want.mar),
            ("smsr", smsr(&m, &rows, &cols).unwrap(), want.smsr),
            ("mean_ri", ri.mean, want_ri_mean),
            ("msa", msa(&z), want.msa),
            ("ve", virtual_error(&z, SigmaKind::Population), want.ve),
        ];
        for (name, got, exp) in pairs {
            let d = (got - exp).abs();
            worst = worst.max(d);
            ensure(d <= 1e-10, || format!("case {case}: {name} {got} vs oracle {exp}"))?;
        }
        for (k, (g, e)) in ri.per_column.iter().zip(&want.ri).enumerate() {
            worst = worst.max((g - e).abs());
            ensure((g - e).abs() <= 1e-10, || format!("case {case}: RI column {k} {g} vs oracle {e}"))?;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2}s, limit 5s"))?;
    Ok(format!("100 matrices x 7 metrics, max |diff| {worst:.1e}"))
}

fn c2_delta_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total = 0;
    for case in 0..20 {
        let spec = PlantedSpec {
            nrows: rng.gen_range(60..=160),
            ncols: rng.gen_range(12..=24),
            blocks: rng.gen_range(1..=3),
            block_rows: 15,
            block_cols: rng.gen_range(2..=4),
            noise_sd: rng.gen_range(0.0..0.1),
            ..Default::default()
        };
        let x = planted_additive(&spec, case).map_err(|e| e.to_string())?.matrix;
        let cfg = BcbofConfig {
            delta: rng.gen_range(0.002..0.05),
            eps: if rng.gen_bool(0.5) { Some(rng.gen_range(0.1..0.6)) } else { None },
            min_pts: if rng.gen_bool(0.5) { Some(rng.gen_range(3..=8)) } else { None },
            ..Default::default()
        };
        let found = bcbof(&x, &cfg).map_err(|e| format!("config {case}: {e}"))?;
        for (k, b) in found.iter().enumerate() {
            let h = naive_msr(&x, &b.rows, &b.cols);
            ensure(h <= cfg.delta, || format!("config {case} bicluster {k}: H = {h} > delta {}", cfg.delta))?;
            ensure(b.rows.len() >= 2 && !b.cols.is_empty(), || format!("config {case} bicluster {k} is degenerate"))?;
        }
        total += found.len();
    }
    Ok(format!("20 configs, {total} biclusters, 0 violations"))
}

fn cells(rows: &[usize], cols: &[usize]) -> HashSet<(usize, usize)> {
    rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect()
}

fn jaccard(a: &HashSet<(usize, usize)>, b: &HashSet<(usize, usize)>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

fn c3_planted_recovery() -> Outcome {
    let t = Instant::now();
    let planted = planted_additive(&PlantedSpec::default(), 0).map_err(|e| e.to_string())?;
    let cfg = BcbofConfig {
        delta: 0.01,
        eps: Some(0.25),
        min_pts: Some(6),
        ..Default::default()
    };
    let found = bcbof(&planted.matrix, &cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let scores: Vec<f64> = planted
        .blocks
        .iter()
        .map(|p| {
            let truth = cells(&p.rows, &p.cols);
            found.iter().map(|b| jaccard(&truth, &cells(&b.rows, &b.cols))).fold(0.0, f64::max)
        })
        .collect();
    let recovered = scores.iter().filter(|&&s| s >= 0.5).count();
    ensure(recovered >= 2, || format!("recovered {recovered} of 3 blocks, best Jaccard {scores:.3?}"))?;
    ensure(secs < 5.0, || format!("took {secs:.2}s, limit 5s"))?;
    Ok(format!("{recovered}/3 blocks at Jaccard >= 0.5 (best {scores:.3?}), {} biclusters", found.len()))
}

/// Kaiser-normalized varimax criterion of loadings `b` (p x 2 as row pairs).
fn oracle_varimax(b: &[[f64; 2]]) -> f64 {
    let p = b.len() as f64;
    let mut total = 0.0;
    for j in 0..2 {
        let sq: Vec<f64> = b
            .iter()
            .map(|r| {
                let h2 = r[0] * r[0] + r[1] * r[1];
                r[j] * r[j] / h2
            })
            .collect();
        let mean = sq.iter().sum::<f64>() / p;
        total += sq.iter().map(|s| s * s).sum::<f64>() / p - mean * mean;
    }
    total
}

fn rotate(a: &[[f64; 2]], theta: f64) -> Vec<[f64; 2]> {
    let (s, c) = theta.sin_cos();
    a.iter().map(|r| [c * r[0] + s * r[1], -s * r[0] + c * r[1]]).collect()
}

/// Grid over one quarter turn (the criterion's period), then golden-section
/// refinement around the best grid point.
fn grid_optimum(a: &[[f64; 2]]) -> f64 {
    let quarter = std::f64::consts::FRAC_PI_2;
    let steps = 3600;
    let h = quarter / steps as f64;
    let f = |t: f64| oracle_varimax(&rotate(a, t));
    let best = (0..steps).max_by(|&i, &j| f(i as f64 * h).total_cmp(&f(j as f64 * h))).unwrap();
    let (mut lo, mut hi) = ((best as f64 - 1.0) * h, (best as f64 + 1.0) * h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    f(best as f64 * h).max(f((lo + hi) / 2.0))
}

fn c4_varimax() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_gap, mut worst_comm, mut worst_orth) = (f64::MIN, 0.0f64, 0.0f64);
    for case in 0..50 {
        let a: Vec<[f64; 2]> = (0..6)
            .map(|_| {
                let r = rng.gen_range(0.2..0.95);
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        let arr = Array2::from_shape_fn((6, 2), |(i, j)| a[i][j]);
        let (b, r) = varimax_rotate(&arr, VarimaxOptions::default()).map_err(|e| e.to_string())?;
        let b_rows: Vec<[f64; 2]> = (0..6).map(|i| [b[[i, 0]], b[[i, 1]]]).collect();
        let got = oracle_varimax(&b_rows);
        let opt = grid_optimum(&a);
        worst_gap = worst_gap.max(opt - got);
        ensure(got >= opt - 1e-6, || format!("case {case}: criterion {got} vs grid optimum {opt}"))?;
        for i in 0..6 {
            let d = ((a[i][0].powi(2) + a[i][1].powi(2)) - (b_rows[i][0].powi(2) + b_rows[i][1].powi(2))).abs();
            worst_comm = worst_comm.max(d);
            ensure(d <= 1e-8, || format!("case {case}: communality of row {i} moved by {d:e}"))?;
        }
        for p in 0..2 {
            for q in 0..2 {
                let dot = r[[0, p]] * r[[0, q]] + r[[1, p]] * r[[1, q]];
                let d = (dot - if p == q { 1.0 } else { 0.0 }).abs();
                worst_orth = worst_orth.max(d);
                ensure(d <= 1e-8, || format!("case {case}: (R'R)[{p}][{q}] = {dot}"))?;
            }
        }
    }
    Ok(format!(
        "50 cases, optimum - achieved <= {worst_gap:.1e}, communality drift {worst_comm:.1e}, |R'R - I| {worst_orth:.1e}"
    ))
}

/// Brute-force density reachability: core points are linked when within eps;
/// clusters are the connected components of that graph.
fn oracle_dbscan(pts: &[[f64; 2]], eps: f64, min_pts: usize) -> (BTreeSet<BTreeSet<usize>>, BTreeSet<usize>) {
    let n = pts.len();
    let near = |i: usize, j: usize| ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt() <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut comp: Vec<usize> = (0..n).collect();
    // repeated relaxation to the smallest reachable index
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && near(i, j) && comp[j] < comp[i] {
                    comp[i] = comp[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut parts: std::collections::BTreeMap<usize, BTreeSet<usize>> = Default::default();
    for i in (0..n).filter(|&i| core[i]) {
        parts.entry(comp[i]).or_default().insert(i);
    }
    let noise = (0..n).filter(|&i| !core[i] && !(0..n).any(|j| core[j] && near(i, j))).collect();
    (parts.into_values().collect(), noise)
}

fn c5_dbscan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut clusters_seen = 0;
    for case in 0..50 {
        let centers: Vec<[f64; 2]> = (0..3).map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]).collect();
        let pts: Vec<[f64; 2]> = (0..60)
            .map(|i| {
                if i % 4 == 3 {
                    [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]
                } else {
                    let c = centers[i % 3];
                    [c[0] + rng.gen_range(-1.0..1.0), c[1] + rng.gen_range(-1.0..1.0)]
                }
            })
            .collect();
        let eps = rng.gen_range(0.4..1.2);
        let min_pts = rng.gen_range(3..=6);
        let arr = Array2::from_shape_fn((60, 2), |(i, j)| pts[i][j]);
        let got = dbscan(&arr, eps, min_pts).map_err(|e| e.to_string())?;
        let (want_parts, want_noise) = oracle_dbscan(&pts, eps, min_pts);

        let got_parts: BTreeSet<BTreeSet<usize>> = got
            .clusters()
            .into_iter()
            .map(|c| c.into_iter().filter(|&i| got.core[i]).collect::<BTreeSet<_>>())
            .collect();
        let got_noise: BTreeSet<usize> = got.noise().into_iter().collect();
        ensure(got_parts == want_parts, || format!("case {case}: core partition differs"))?;
        ensure(got_noise == want_noise, || format!("case {case}: noise {got_noise:?} vs oracle {want_noise:?}"))?;
        clusters_seen += want_parts.len();
    }
    Ok(format!("50 instances, {clusters_seen} clusters, partitions and noise identical"))
}

fn c6_trend_table() -> Outcome {
    let t = 0.5;
    // (lower bound inclusive, level), scanned from the top band down
    let bands = [(3.0 * t, 3), (2.0 * t, 2), (t, 1), (-t, 0), (-2.0 * t, -1), (-3.0 * t, -2)];
    let mut seen = BTreeSet::new();
    for k in -50..=50 {
        let cr = k as f64 * t / 10.0;
        let want = bands.iter().find(|(lo, _)| cr >= *lo).map_or(-3, |&(_, l)| l);
        let got = trend_level(cr, t);
        ensure(got == want, || format!("cr = {cr}: level {got}, table says {want}"))?;
        seen.insert(got);
    }
    ensure(trend_level(2.0 * t, t) == 2, || "cr = 2T must be level 2".into())?;
    ensure(trend_level(-3.0 * t, t) == -2, || "cr = -3T must be level -2".into())?;
    ensure(seen.len() == 7, || format!("only levels {seen:?} reached"))?;
    Ok("101 points over [-5T, 5T], 7 bands, boundaries left-closed".into())
}

fn market(days: usize, seed: u64) -> OhlcvSeries {
    synthetic_market(
        &MarketSpec {
            days,
            ..Default::default()
        },
        seed,
    )
    .unwrap()
}

/// Replays a signal log against the raw closes and `ybar`; returns violations.
fn audit(series: &OhlcvSeries, ybar: &[Option<f64>], start: usize, p: &StrategyParams, log: &[Signal]) -> Vec<String> {
    let closes: Vec<f64> = series.bars().iter().map(|b| b.close).collect();
    let mut bad = Vec::new();
    let mut holding: Option<(usize, f64)> = None;
    let mut last_trade: Option<usize> = None;
    let mut prev_day: Option<usize> = None;
    for s in log {
        let d = s.day;
        if d < start || prev_day.is_some_and(|pd| d <= pd) {
            bad.push(format!("day {d}: out of order"));
        }
        prev_day = Some(d);
        let exec = match p.fill {
            Fill::Close => Some(closes[d]),
            Fill::NextOpen => series.bars().get(d + 1).map(|b| b.open),
        };
        match (s.kind, holding) {
            (SignalKind::Buy, None) => {
                let y = ybar[d];
                let avg = (d + 1 >= p.n_avg).then(|| closes[d + 1 - p.n_avg..=d].iter().sum::<f64>() / p.n_avg as f64);
                if s.rule != RuleId::Rule1 {
                    bad.push(format!("day {d}: buy tagged {:?}", s.rule));
                }
                if !y.is_some_and(|y| y >= p.t_h) {
                    bad.push(format!("day {d}: buy with ybar {y:?} < t_h {}", p.t_h));
                }
                if !avg.is_some_and(|a| closes[d] < a) {
                    bad.push(format!("day {d}: buy with close {} not under average {avg:?}", closes[d]));
                }
                if let Some(l) = last_trade {
                    if d - l < p.t_bt {
                        bad.push(format!("day {d}: buy {} days after the last trade", d - l));
                    }
                }
                if exec != Some(s.price) {
                    bad.push(format!("day {d}: buy price {} is not the fill price", s.price));
                }
                holding = Some((d, s.price));
                last_trade = Some(d);
            }
            (SignalKind::Sell, Some((bd, bp))) => {
                let loss = (bp - closes[d]) / bp * 100.0;
                match s.rule {
                    RuleId::Rule2 => {
                        if !ybar[d].is_some_and(|y| y < p.t_h) {
                            bad.push(format!("day {d}: rule-2 sell with ybar {:?}", ybar[d]));
                        }
                        if !(closes[d] > bp) {
                            bad.push(format!("day {d}: rule-2 sell at close {} <= buy price {bp}", closes[d]));
                        }
                        if d - bd < p.t_bs {
                            bad.push(format!("day {d}: rule-2 sell after {} days", d - bd));
                        }
                    }
                    RuleId::Rule3StopLoss => {
                        if loss < p.t_loss {
                            bad.push(format!("day {d}: stop loss at {loss}% < {}%", p.t_loss));
                        }
                    }
                    RuleId::EndOfTestForced => {
                        if d != closes.len() - 1 {
                            bad.push(format!("day {d}: forced exit before the last day"));
                        }
                    }
                    RuleId::Rule1 => bad.push(format!("day {d}: sell tagged rule1")),
                }
                holding = None;
                last_trade = Some(d);
            }
            (kind, _) => bad.push(format!("day {d}: {kind:?} breaks buy/sell alternation")),
        }
    }
    if holding.is_some() {
        bad.push("log ends with an open position".into());
    }
    bad
}

fn c7_trading_audit() -> Outcome {
    let (mut buys, mut sells) = (0, [0usize; 3]);
    let mut series_checked = 0;
    for seed in 0..6u64 {
        let s = market(250, 700 + seed);
        let mut cfg = TrainConfig::default();
        if seed % 2 == 1 {
            cfg.strategy.fill = Fill::NextOpen;
        }
        let m = match train(&s.slice(0, 170).unwrap(), &cfg) {
            Ok(m) => m,
            Err(e) => return Err(format!("seed {seed}: training failed: {e}")),
        };
        // audit the in-sample run and the out-of-sample application
        let first = 28;
        let ins = s.slice(0, 170).unwrap();
        let frame = bcbof::indicators::compute_indicators(&ins, &m.model.indicators).unwrap();
        let x = bcbof::datamodel::apply_normalization(&frame.matrix, &m.model.norm).unwrap();
        let y_in = ybar_series(&m.model.rule_base, &x, first, ins.len()).unwrap();
        let bt_in = simulate(&ins, &y_in, first, &m.model.params).unwrap();
        let app = apply(&s, 170, &m.model, true).unwrap();
        for (series, ybar, start, log) in
            [(&ins, &y_in, first, &bt_in.signals), (&s, &app.ybar, app.start, &app.backtest.signals)]
        {
            let bad = audit(series, ybar, start, &m.model.params, log);
            ensure(bad.is_empty(), || format!("seed {seed}: {} violations, first: {}", bad.len(), bad[0]))?;
            for sig in log {
                match sig.rule {
                    RuleId::Rule1 => buys += 1,
                    RuleId::Rule2 => sells[0] += 1,
                    RuleId::Rule3StopLoss => sells[1] += 1,
                    RuleId::EndOfTestForced => sells[2] += 1,
                }
            }
        }
        series_checked += 1;
    }
    ensure(buys > 0 && sells[0] > 0, || "audit saw no rule-1 buys or rule-2 sells".into())?;
    Ok(format!(
        "{series_checked} series of 250 days, {buys} buys, {} rule-2 / {} rule-3 / {} forced sells, 0 violations",
        sells[0], sells[1], sells[2]
    ))
}

fn c8_pso() -> Outcome {
    let mut nonflat = 0;
    for seed in 100..120u64 {
        let s = market(272, seed);
        let cfg = TrainConfig::default();
        let m = train(&s, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let frame = bcbof::indicators::compute_indicators(&s, &m.model.indicators).unwrap();
        let x = bcbof::datamodel::apply_normalization(&frame.matrix, &m.model.norm).unwrap();
        let ybar = ybar_series(&m.model.rule_base, &x, frame.first_day, s.len()).unwrap();
        let profit_at = |t_h: f64| {
            let p = StrategyParams { t_h, ..cfg.strategy };
            simulate(&s, &ybar, frame.first_day, &p).unwrap().profit
        };
        let grid_best = (0..=600).map(|k| profit_at(-3.0 + k as f64 * 0.01)).fold(f64::MIN, f64::max);
        let at_pso = profit_at(m.pso.best);
        ensure(at_pso >= grid_best - 1e-9, || format!("seed {seed}: PSO profit {at_pso} < grid best {grid_best}"))?;
        ensure(at_pso == m.pso.best_value, || format!("seed {seed}: reported value {} != {at_pso}", m.pso.best_value))?;
        if !m.pso.flat {
            nonflat += 1;
        }
        let runs: Vec<u64> = (0..3)
            .map(|_| {
                pso_optimize_threshold(&s, &ybar, frame.first_day, &cfg.strategy, &cfg.pso)
                    .unwrap()
                    .best
                    .to_bits()
            })
            .collect();
        ensure(
            runs.iter().all(|&b| b == m.pso.best.to_bits()),
            || format!("seed {seed}: t_h differs across runs"),
        )?;
    }
    Ok(format!("20 training sets ({nonflat} with a non-flat objective), PSO >= 601-point grid, t_h bit-identical x3"))
}

fn c9_profit() -> Outcome {
    let trade = |bp: f64, sp: f64| Trade {
        buy_day: 0,
        buy_price: bp,
        sell_day: 1,
        sell_price: sp,
        reason: RuleId::Rule2,
    };
    let fixed = [
        (vec![trade(10.0, 11.0), trade(20.0, 18.0)], 0.0),
        (vec![trade(4.0, 5.0)], 25.0),
        (vec![trade(8.0, 6.0), trade(50.0, 60.0), trade(1.0, 1.5)], -25.0 + 20.0 + 50.0),
        (vec![], 0.0),
    ];
    for (trades, want) in &fixed {
        let got = backtest_profit(trades);
        ensure((got - want).abs() <= 1e-12, || format!("{trades:?}: {got} vs {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..200 {
        let trades: Vec<Trade> = (0..rng.gen_range(1..30))
            .map(|_| trade(rng.gen_range(1.0..100.0), rng.gen_range(1.0..100.0)))
            .collect();
        let mut want = 0.0;
        for t in &trades {
            want += 100.0 * (t.sell_price - t.buy_price) / t.buy_price;
        }
        let got = backtest_profit(&trades);
        ensure((got - want).abs() <= 1e-12 * want.abs().max(1.0), || format!("case {case}: {got} vs {want}"))?;
    }
    let bars = |closes: &[f64]| {
        OhlcvSeries::new(
            closes
                .iter()
                .enumerate()
                .map(|(i, &c)| Bar {
                    date: format!("2022-01-{:02}", i + 1),
                    open: c,
                    high: c,
                    low: c,
                    close: c,
                    volume: 1.0,
                })
                .collect(),
        )
        .unwrap()
    };
    for (closes, want) in [(vec![10.0, 12.0, 15.0], 50.0), (vec![40.0, 10.0, 30.0], -25.0), (vec![7.0], 0.0)] {
        let got = buy_and_hold_profit(&bars(&closes)).unwrap();
        ensure((got - want).abs() <= 1e-12, || format!("buy-and-hold {closes:?}: {got} vs {want}"))?;
    }
    Ok("4 hand-built lists, 200 random lists and 3 buy-and-hold series within 1e-12".into())
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run_cli(args: &[&str], out: &Path) -> Result<PathBuf, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_bcbof"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(PathBuf::from(String::from_utf8_lossy(&o.stdout).lines().next().unwrap_or_default()))
}

fn primary_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().is_some_and(|n| n != "timing.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn c10_end_to_end() -> Outcome {
    let cfg = fixtures().join("trading.toml");
    let cfg = cfg.to_str().unwrap();
    let mut runs = Vec::new();
    let mut slowest = 0.0f64;
    for _ in 0..2 {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let t = Instant::now();
        let dir = run_cli(&["train", "--config", cfg], tmp.path())?;
        run_cli(&["backtest", "--config", cfg], tmp.path())?;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        runs.push(primary_outputs(&dir));
    }
    ensure(slowest < 60.0, || format!("train + backtest took {slowest:.1}s"))?;
    ensure(runs[0] == runs[1], || {
        let diff: Vec<&str> = runs[0]
            .iter()
            .zip(&runs[1])
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.0.as_str())
            .collect();
        format!("outputs differ between runs: {diff:?}")
    })?;
    let indicators = runs[0].iter().find(|(n, _)| n == "indicators.csv").ok_or("indicators.csv missing")?;
    let text = String::from_utf8_lossy(&indicators.1);
    let rows = text.lines().count() - 1;
    let cols = text.lines().next().unwrap_or_default().split(',').count() - 1;
    ensure((rows, cols) == (244, 8), || format!("antecedent matrix is {rows}x{cols}"))?;
    Ok(format!("244x8 antecedent fixture, {} output files byte-identical, {slowest:.2}s per run", runs[0].len()))
}
