//! End-to-end acceptance gate. Run with
//! `cargo test -p bvc-core --test acceptance -- --nocapture` to see one
//! PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bvc_core::approx_async::approx_schedule;
use bvc_core::geom::combinatorics::colex_subsets;
use bvc_core::geom::rational::{int, rational, to_fraction_string};
use bvc_core::geom::{gamma_select, hull_contains, tverberg_oracle, PointMultiset, Rational, RationalPoint};
use bvc_core::model::{Mode, ScenarioConfig, Step2Mode, Strategy};
use bvc_core::scenario::{run_scenario, section1_check, thm1_demo, thm3_demo, undersized_restricted_async, RunReport};

struct Gate {
    failed: Vec<u32>,
}

impl Gate {
    fn report(&mut self, id: u32, ok: bool, detail: String, elapsed: Duration, limit: Duration) {
        let in_time = elapsed < limit;
        let verdict = if ok && in_time { "PASS" } else { "FAIL" };
        let late = if in_time { "" } else { " (over time)" };
        println!(
            "criterion {id}: {verdict}  {detail}  [{:.2} s of {} s{late}]",
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
        if verdict == "FAIL" {
            self.failed.push(id);
        }
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn random_rational(rng: &mut ChaCha8Rng) -> Rational {
    rational(rng.gen_range(-20..=20), rng.gen_range(1..=5))
}

fn random_multiset(rng: &mut ChaCha8Rng, d: usize, len: usize) -> PointMultiset {
    (0..len)
        .map(|_| RationalPoint::new((0..d).map(|_| random_rational(rng)).collect()))
        .collect()
}

fn in_gamma(y: &PointMultiset, f: usize, p: &RationalPoint) -> bool {
    colex_subsets(y.len(), y.len() - f).all(|idx| hull_contains(&y.select(&idx), p).unwrap_or(false))
}

/// 200 seeded multisets of size `(d + 1)f + 1` for each `(d, f)`.
fn lemma_suite() -> Vec<(usize, usize, Vec<PointMultiset>)> {
    let mut out = Vec::new();
    for d in 1..=3 {
        for f in 1..=2 {
            let mut rng = ChaCha8Rng::seed_from_u64((d * 10 + f) as u64);
            let sets = (0..200)
                .map(|_| random_multiset(&mut rng, d, (d + 1) * f + 1))
                .collect();
            out.push((d, f, sets));
        }
    }
    out
}

/// Inputs on the grid `lower + k·(upper − lower)/8`.
fn grid_inputs(seed: u64, n: usize, d: usize, lower: &Rational, upper: &Rational) -> Vec<RationalPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = (upper - lower) / int(8);
    (0..n)
        .map(|_| RationalPoint::new((0..d).map(|_| lower + &step * int(rng.gen_range(0..=8))).collect()))
        .collect()
}

fn adversaries(d: usize, cfg: &ScenarioConfig, with_crash: bool, with_starve: bool, seed: u64) -> Vec<Strategy> {
    let low = RationalPoint::splat(d, cfg.lower.clone());
    let high = RationalPoint::splat(d, cfg.upper.clone());
    let mut list = Vec::new();
    if with_crash {
        list.push(Strategy::Crash {
            round: seed % (cfg.f as u64 + 2),
        });
    }
    list.push(Strategy::Mute);
    list.push(Strategy::FixedLie { point: high.clone() });
    list.push(Strategy::Equivocate {
        points: vec![low, high],
    });
    if with_starve {
        list.push(Strategy::Starve);
    }
    list
}

struct Matrix {
    runs: usize,
    failures: Vec<String>,
    hashes: Vec<(ScenarioConfig, Vec<RationalPoint>, String)>,
}

impl Matrix {
    fn new() -> Self {
        Self {
            runs: 0,
            failures: Vec::new(),
            hashes: Vec::new(),
        }
    }

    /// Runs one scenario and records a failure if `extra` rejects it.
    fn run(&mut self, cfg: ScenarioConfig, inputs: Vec<RationalPoint>, extra: impl Fn(&RunReport) -> Option<String>) {
        self.runs += 1;
        let label = format!(
            "{} n={} d={} {:?} {} seed={}",
            cfg.mode.name(),
            cfg.n,
            cfg.d,
            cfg.step2,
            cfg.faulty.values().next().map_or("none", Strategy::name),
            cfg.seed
        );
        match run_scenario(&cfg, &inputs) {
            Ok(report) => {
                if !report.ok() {
                    self.failures.push(format!("{label}: {:?}", report.summary.failures()));
                } else if let Some(why) = extra(&report) {
                    self.failures.push(format!("{label}: {why}"));
                }
                self.hashes.push((cfg, inputs, report.summary.trace_sha256.clone()));
            }
            Err(e) => self.failures.push(format!("{label}: {e}")),
        }
    }

    fn detail(&self) -> String {
        match self.failures.first() {
            None => format!("{} runs clean", self.runs),
            Some(first) => format!("{} of {} runs failed, first: {first}", self.failures.len(), self.runs),
        }
    }
}

fn requires(report: &RunReport, audits: &[&str]) -> Option<String> {
    audits
        .iter()
        .find(|a| !report.summary.passed(a))
        .map(|a| format!("audit '{a}' did not run clean"))
}

fn rounds_match_bound(report: &RunReport) -> Option<String> {
    let s = &report.summary;
    (Some(s.rounds) != s.round_bound).then(|| format!("{} rounds, bound {:?}", s.rounds, s.round_bound))
}

const APPROX_AUDITS: &[&str] = &[
    "termination",
    "agreement",
    "validity",
    "epsilon",
    "contraction",
    "properties",
    "common_point",
    "delivery",
];

/// `(n, d, U − ν, expected γ, expected R)` at `n = (d + 2)f + 1`, `ε = 1/100`.
const APPROX_CONFIGS: [(usize, usize, i64, i64, u64); 2] = [(4, 1, 12, 16, 111), (5, 2, 1, 25, 114)];

fn approx_matrix(step2: Step2Mode) -> (Matrix, Vec<String>) {
    let mut m = Matrix::new();
    let mut schedules = Vec::new();
    for (n, d, span, gamma_den, bound) in APPROX_CONFIGS {
        for seed in 0..5 {
            let mut base = ScenarioConfig::new(Mode::ApproxAsync, n, 1, d);
            base.name = format!("approx-n{n}-d{d}");
            base.upper = int(span);
            base.epsilon = rational(1, 100);
            base.step2 = step2;
            base.seed = seed;
            let inputs = grid_inputs(100 + seed, n, d, &base.lower, &base.upper);
            for s in adversaries(d, &base, false, true, seed) {
                let mut cfg = base.clone();
                cfg.faulty.insert((seed as usize + 1) % n, s);
                let expected_gamma = match step2 {
                    Step2Mode::AllSubsets => rational(1, gamma_den),
                    Step2Mode::WitnessOptimized => rational(1, (n * n) as i64),
                };
                let audits: Vec<&str> = match step2 {
                    Step2Mode::AllSubsets => APPROX_AUDITS.to_vec(),
                    Step2Mode::WitnessOptimized => [APPROX_AUDITS, &["witness_sharing", "z_size"]].concat(),
                };
                m.run(cfg, inputs.clone(), |r| {
                    let s = &r.summary;
                    if s.gamma.as_ref() != Some(&expected_gamma) {
                        return Some(format!("gamma {:?}", s.gamma.as_ref().map(to_fraction_string)));
                    }
                    if step2 == Step2Mode::AllSubsets && s.round_bound != Some(bound) {
                        return Some(format!("round bound {:?}, expected {bound}", s.round_bound));
                    }
                    rounds_match_bound(r).or_else(|| requires(r, &audits))
                });
            }
        }
        let mut cfg = ScenarioConfig::new(Mode::ApproxAsync, n, 1, d);
        cfg.upper = int(span);
        cfg.epsilon = rational(1, 100);
        cfg.step2 = step2;
        let (gamma, r) = approx_schedule(&cfg);
        schedules.push(format!("n={n}: gamma {} R {r}", to_fraction_string(&gamma)));
    }
    (m, schedules)
}

#[test]
fn acceptance() {
    let mut gate = Gate { failed: Vec::new() };
    let mut hashes = Vec::new();

    // 1
    let t = Instant::now();
    let r = section1_check();
    let ok = matches!(&r, Ok(s) if !s.membership);
    gate.report(
        1,
        ok,
        "(1/6, 1/6, 1/6) outside the hull of the probability vectors".into(),
        t.elapsed(),
        secs(1),
    );

    // 2
    let suite = lemma_suite();
    let t = Instant::now();
    let mut bad = Vec::new();
    let mut count = 0;
    for (d, f, sets) in &suite {
        for (k, y) in sets.iter().enumerate() {
            count += 1;
            match gamma_select(y, *f) {
                Ok(p) if in_gamma(y, *f, &p) => {}
                Ok(_) => bad.push(format!("d={d} f={f} #{k}: point outside a subset hull")),
                Err(e) => bad.push(format!("d={d} f={f} #{k}: {e}")),
            }
        }
    }
    let detail = bad
        .first()
        .cloned()
        .unwrap_or_else(|| format!("{count} multisets, every Γ point in every subset hull"));
    gate.report(2, bad.is_empty(), detail, t.elapsed(), secs(60));

    // 3
    let t = Instant::now();
    let mut bad = Vec::new();
    for (d, f, sets) in &suite {
        for (k, y) in sets.iter().enumerate() {
            match tverberg_oracle(y, *f) {
                Ok(Some(part)) if in_gamma(y, *f, &part.witness) => {}
                Ok(Some(_)) => bad.push(format!("d={d} f={f} #{k}: witness outside Γ")),
                Ok(None) => bad.push(format!("d={d} f={f} #{k}: no partition")),
                Err(e) => bad.push(format!("d={d} f={f} #{k}: {e}")),
            }
        }
    }
    let detail = bad
        .first()
        .cloned()
        .unwrap_or_else(|| format!("{count} partitions found, every witness in Γ"));
    gate.report(3, bad.is_empty(), detail, t.elapsed(), secs(120));

    // 4
    let t = Instant::now();
    let mut m = Matrix::new();
    for (n, d) in [(4, 1), (5, 3)] {
        for seed in 0..10 {
            let mut base = ScenarioConfig::new(Mode::ExactSync, n, 1, d);
            base.name = format!("exact-n{n}-d{d}");
            base.upper = int(8);
            base.seed = seed;
            let inputs = grid_inputs(seed, n, d, &base.lower, &base.upper);
            for s in adversaries(d, &base, true, false, seed) {
                let mut cfg = base.clone();
                cfg.faulty.insert(seed as usize % n, s);
                m.run(cfg, inputs.clone(), |r| {
                    let o = &r.summary.outcome;
                    if !o.contains(&bvc_core::scenario::Outcome::AgreementOk)
                        || !o.contains(&bvc_core::scenario::Outcome::ValidityOk)
                    {
                        return Some("missing AgreementOk or ValidityOk".into());
                    }
                    (r.trace.phases != 3).then(|| format!("{} phases", r.trace.phases))
                });
            }
        }
    }
    gate.report(4, m.failures.is_empty(), m.detail(), t.elapsed(), secs(60));
    hashes.append(&mut m.hashes);

    // 5
    let t = Instant::now();
    let mut bad = Vec::new();
    for d in 1..=4 {
        match thm1_demo(d) {
            Ok(r) if r.intersection_empty => {}
            Ok(_) => bad.push(format!("d={d}: common point found")),
            Err(e) => bad.push(format!("d={d}: {e}")),
        }
    }
    let detail = bad
        .first()
        .cloned()
        .unwrap_or_else(|| "leave-one-out hulls disjoint for d = 1..4".into());
    gate.report(5, bad.is_empty(), detail, t.elapsed(), secs(10));

    // 6
    let t = Instant::now();
    let mut bad = Vec::new();
    for d in 1..=3 {
        match thm3_demo(d, &rational(1, 4)) {
            Ok(r) => {
                let zero = Some(int(0));
                let exact = r
                    .processes
                    .iter()
                    .all(|p| p.excursions.iter().all(|(up, down)| *up == zero && *down == zero));
                if !(r.all_singletons() && exact && r.agreement_violated()) {
                    bad.push(format!("d={d}: not every forced region is a singleton"));
                }
            }
            Err(e) => bad.push(format!("d={d}: {e}")),
        }
    }
    let detail = bad
        .first()
        .cloned()
        .unwrap_or_else(|| "every forced region is {x_i}, d = 1..3".into());
    gate.report(6, bad.is_empty(), detail, t.elapsed(), secs(30));

    // 7
    let t = Instant::now();
    let (mut m, schedules) = approx_matrix(Step2Mode::AllSubsets);
    let detail = format!("{}; {}", m.detail(), schedules.join(", "));
    gate.report(7, m.failures.is_empty(), detail, t.elapsed(), secs(600));
    hashes.append(&mut m.hashes);

    // 8
    let t = Instant::now();
    let (mut m, schedules) = approx_matrix(Step2Mode::WitnessOptimized);
    let detail = format!("{}; {}", m.detail(), schedules.join(", "));
    gate.report(8, m.failures.is_empty(), detail, t.elapsed(), secs(600));
    hashes.append(&mut m.hashes);

    // 9
    let t = Instant::now();
    let mut m = Matrix::new();
    for d in 1..=2 {
        for (mode, n) in [(Mode::RestrictedSync, d + 3), (Mode::RestrictedAsync, d + 5)] {
            for seed in 0..5 {
                let mut base = ScenarioConfig::new(mode, n, 1, d);
                base.name = format!("{}-n{n}-d{d}", mode.name());
                base.epsilon = rational(1, 10);
                base.seed = seed;
                let inputs = grid_inputs(200 + seed, n, d, &base.lower, &base.upper);
                let async_mode = mode == Mode::RestrictedAsync;
                for s in adversaries(d, &base, false, async_mode, seed) {
                    let mut cfg = base.clone();
                    cfg.faulty.insert((seed as usize + 2) % n, s);
                    m.run(cfg, inputs.clone(), |r| {
                        rounds_match_bound(r).or_else(|| requires(r, APPROX_AUDITS))
                    });
                }
            }
        }
    }
    let mut undersized = Vec::new();
    let mut breaking = Vec::new();
    for d in 1..=2 {
        match undersized_restricted_async(d, 0..100) {
            Ok(Some(x)) => {
                undersized.push(format!(
                    "d={d} n={}: seed {} round {} shares {} of {} tuples",
                    d + 4,
                    x.seed,
                    x.round,
                    x.common,
                    x.required
                ));
                breaking.push((d, x));
            }
            Ok(None) => m
                .failures
                .push(format!("d={d}: no schedule breaks the overlap at n = {}", d + 4)),
            Err(e) => m.failures.push(format!("d={d} undersized: {e}")),
        }
    }
    let detail = format!("{}; undersized: {}", m.detail(), undersized.join(", "));
    gate.report(9, m.failures.is_empty(), detail, t.elapsed(), secs(600));
    hashes.append(&mut m.hashes);

    // 10
    let t = Instant::now();
    let mut mismatches = Vec::new();
    for (cfg, inputs, sha) in &hashes {
        match run_scenario(cfg, inputs) {
            Ok(r) if &r.summary.trace_sha256 == sha => {}
            _ => mismatches.push(format!("{} seed {}", cfg.name, cfg.seed)),
        }
    }
    for (d, x) in &breaking {
        match undersized_restricted_async(*d, x.seed..x.seed + 1) {
            Ok(Some(y)) if y == *x => {}
            _ => mismatches.push(format!("undersized d={d} seed {}", x.seed)),
        }
    }
    let detail = match mismatches.first() {
        None => format!("{} reruns reproduce their trace sha256", hashes.len() + breaking.len()),
        Some(first) => format!("{} reruns differ, first: {first}", mismatches.len()),
    };
    gate.report(10, mismatches.is_empty(), detail, t.elapsed(), secs(600));

    assert!(gate.failed.is_empty(), "failed criteria: {:?}", gate.failed);
}
