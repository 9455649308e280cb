//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances are fixed here and nowhere else.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use logic_selftrain::ast::parse_logical_form;
use logic_selftrain::consistency::{content_score, lcs_length, ConsistencyConfig};
use logic_selftrain::corpus::{
    bucket_by_depth, calibrate_thresholds, convert_logic2text, dataset_stats, form_depths, load_dataset, load_pool,
    ParallelPair, UnlabeledItem,
};
use logic_selftrain::metrics::{bleu1, rouge_l, rouge_n};
use logic_selftrain::rules::structure_verdict;
use logic_selftrain::schema::FunctionSchema;
use logic_selftrain::selftrain::checkpoint::{REPORT_FILE, SELECTION_FILE, STATE_FILE};
use logic_selftrain::selftrain::{
    run_self_training, IterationView, RunOptions, RunOutcome, SelfTrainConfig, SelfTrainError,
};
use logic_selftrain::tagger::{Direction, ReplayTagger, TrainPair};
use logic_selftrain::testkit;

const ROUND_TRIP_TREES: usize = 10_000;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);
const FUZZ_MUTATIONS: usize = 10_000;
const LCS_PAIRS: usize = 1_000;
const LCS_MAX_LEN: usize = 12;
const BETA_LIMIT_TOL: f64 = 1e-4;
const GOLDEN_DECIMALS: i32 = 4;
const LOOP_BUDGET: Duration = Duration::from_secs(5);
const STATS_TOL: f64 = 0.02;
const VALIDATE_MIN: f64 = 0.99;
const BUCKET_TOL: f64 = 0.05;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---- parser ---------------------------------------------------------------

fn parser_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..ROUND_TRIP_TREES {
        let depth = rng.gen_range(1..=6);
        let tree = testkit::random_tree(&mut rng, depth);
        let back = parse_logical_form(&tree.linearize()).map_err(|e| format!("tree {i}: {e}"))?;
        ensure(back == tree, || format!("tree {i} differs after round trip: {}", tree.linearize()))?;
    }
    let took = start.elapsed();
    ensure(took < ROUND_TRIP_BUDGET, || format!("took {took:.2?}, budget {ROUND_TRIP_BUDGET:?}"))?;
    Ok(format!("{ROUND_TRIP_TREES} trees in {took:.2?}"))
}

// ---- structure rules ------------------------------------------------------

/// Each conformant tree (which passes at κ = 1) gets exactly one mutation;
/// the flag of the rule that the mutation targets must flip. κ = 1 makes a
/// single arity error visible whatever the tree size.
fn rule_fuzzing() -> Outcome {
    let schema = FunctionSchema::default_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
    let mut flipped = [0usize; 3];
    let mut tried = [0usize; 3];
    for i in 0..FUZZ_MUTATIONS {
        let depth = rng.gen_range(1..=4);
        let tree = testkit::conformant_tree(&mut rng, &schema, depth);
        let form = tree.linearize();
        let base = structure_verdict(&form, &schema, 1.0);
        ensure(base.overall_pass, || format!("conformant tree rejected: {form}"))?;
        let kind = i % 3;
        tried[kind] += 1;
        let ok = match kind {
            0 => !structure_verdict(&testkit::delete_closing_brace(&form, &mut rng), &schema, 1.0).rule1_pass,
            1 => {
                let v = structure_verdict(&testkit::rename_function(&tree, &schema, &mut rng).linearize(), &schema, 1.0);
                v.rule1_pass && !v.rule2_pass
            }
            _ => {
                let v = structure_verdict(&testkit::change_arity(&tree, &mut rng).linearize(), &schema, 1.0);
                v.rule1_pass && v.rule2_pass && !v.rule3_pass && v.rule3_avg < base.rule3_avg
            }
        };
        if ok {
            flipped[kind] += 1;
        }
    }
    let total: usize = flipped.iter().sum();
    ensure(total == FUZZ_MUTATIONS, || {
        format!("flipped brace {}/{}, rename {}/{}, arity {}/{}", flipped[0], tried[0], flipped[1], tried[1], flipped[2], tried[2])
    })?;
    Ok(format!("{total}/{FUZZ_MUTATIONS} mutations flipped their rule (brace/rename/arity {}/{}/{})", tried[0], tried[1], tried[2]))
}

// ---- content consistency --------------------------------------------------

fn lcs_brute(a: &[u8], b: &[u8]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let ones = mask.count_ones() as usize;
        if ones <= best {
            continue;
        }
        let mut it = long.iter();
        if (0..short.len()).filter(|i| mask >> i & 1 == 1).all(|i| it.any(|y| *y == short[i])) {
            best = ones;
        }
    }
    best
}

fn words(t: &[u8]) -> String {
    t.iter().map(|x| format!("t{x}")).collect::<Vec<_>>().join(" ")
}

fn lcs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1c5);
    let mut worst_limit = 0.0f64;
    for i in 0..LCS_PAIRS {
        let gen = |rng: &mut ChaCha8Rng| {
            let n = rng.gen_range(1..=LCS_MAX_LEN);
            (0..n).map(|_| rng.gen_range(0..4u8)).collect::<Vec<_>>()
        };
        let (a, b) = (gen(&mut rng), gen(&mut rng));
        let (fast, slow) = (lcs_length(&a, &b), lcs_brute(&a, &b));
        ensure(fast == slow, || format!("pair {i}: lcs {fast} vs brute force {slow}"))?;

        let (u, v) = (words(&a), words(&b));
        let l = slow as f64;
        let (r, p) = (l / b.len() as f64, l / a.len() as f64);
        let low = content_score(&u, &v, &ConsistencyConfig::with_beta(1e-6));
        let high = content_score(&u, &v, &ConsistencyConfig::with_beta(1e6));
        worst_limit = worst_limit.max((low - p).abs()).max((high - r).abs());

        let own = content_score(&u, &u, &ConsistencyConfig::default());
        ensure(own == 1.0, || format!("pair {i}: score(u, u) = {own}"))?;
    }
    ensure(worst_limit <= BETA_LIMIT_TOL, || format!("beta limits off by {worst_limit:e}"))?;
    Ok(format!("{LCS_PAIRS} pairs exact, beta-limit error {worst_limit:.1e}, score(u,u) = 1"))
}

// ---- metrics --------------------------------------------------------------

fn metric_golden() -> Outcome {
    let path = workspace().join("crates/core/tests/data/metrics_golden.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let scale = 10f64.powi(GOLDEN_DECIMALS);
    let round = |x: f64| (x * scale).round() / scale;
    let mut n = 0;
    for line in text.lines() {
        let case: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let c: Vec<&str> = case["candidate"].as_str().unwrap().split_whitespace().collect();
        let r: Vec<&str> = case["reference"].as_str().unwrap().split_whitespace().collect();
        let got = [
            ("bleu1", bleu1(&c, &r)),
            ("rouge1", rouge_n(&c, &r, 1)),
            ("rouge2", rouge_n(&c, &r, 2)),
            ("rougel", rouge_l(&c, &r)),
        ];
        for (name, value) in got {
            let want = case[name].as_f64().unwrap();
            ensure(round(value) == want, || format!("{}: {name} {value:.6} vs {want}", case["name"]))?;
        }
        n += 1;
    }
    ensure(n == 10, || format!("golden file has {n} cases"))?;
    Ok(format!("{n} cases match to {GOLDEN_DECIMALS} decimals"))
}

// ---- self-training loop ---------------------------------------------------

struct Fixture {
    train: Vec<ParallelPair>,
    pool: Vec<UnlabeledItem>,
    t2l: Vec<TrainPair>,
    l2t: Vec<TrainPair>,
}

fn memory(path: &Path) -> Result<Vec<TrainPair>, String> {
    fs::read_to_string(path)
        .map_err(|e| format!("{}: {e}", path.display()))?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn load_fixture() -> Result<Fixture, String> {
    let dir = workspace().join("crates/cli/tests/fixtures/replay30");
    Ok(Fixture {
        train: load_dataset(dir.join("train.jsonl")).map_err(|e| e.to_string())?.0,
        pool: load_pool(dir.join("pool.jsonl")).map_err(|e| e.to_string())?.0,
        t2l: memory(&dir.join("t2l_memory.jsonl"))?,
        l2t: memory(&dir.join("l2t_memory.jsonl"))?,
    })
}

fn run_loop(
    fx: &Fixture,
    cfg: &SelfTrainConfig,
    dir: Option<&Path>,
    opts: RunOptions<'_>,
) -> Result<RunOutcome, SelfTrainError> {
    let mut t2l = ReplayTagger::with_memory(Direction::TextToLogic, fx.t2l.clone());
    let mut l2t = ReplayTagger::with_memory(Direction::LogicToText, fx.l2t.clone());
    run_self_training(&fx.train, &fx.pool, &mut t2l, &mut l2t, &FunctionSchema::default_schema(), cfg, dir, opts)
}

fn checkpoint_bytes(dir: &Path) -> Vec<Vec<u8>> {
    [STATE_FILE, SELECTION_FILE, REPORT_FILE].iter().map(|f| fs::read(dir.join(f)).unwrap_or_default()).collect()
}

fn loop_determinism() -> Outcome {
    let start = Instant::now();
    let fx = load_fixture()?;
    ensure(fx.pool.len() == 30, || format!("fixture pool has {} items", fx.pool.len()))?;
    let ks = [1usize, 3, 4, 7, 10, 30];
    let mut checked_iterations = 0;
    for &k in &ks {
        let cfg = SelfTrainConfig { k, shuffle_seed: 42, ..Default::default() };

        // per-iteration sort oracle on the candidates the loop saw
        let mut mismatch: Option<String> = None;
        let mut observer = |v: &IterationView<'_>| {
            let mut q: Vec<_> = v
                .candidates
                .iter()
                .filter(|c| c.verdict.rule1_pass && c.verdict.rule2_pass && c.verdict.rule3_pass && !c.tag_failed)
                .map(|c| (c.content_score, c.item.id.clone()))
                .collect();
            q.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
            let want: Vec<String> = q.into_iter().take(k).map(|(_, id)| id).collect();
            if want != v.selected && mismatch.is_none() {
                mismatch = Some(format!("k={k} iteration {}: selected {:?}, oracle {want:?}", v.iteration, v.selected));
            }
        };
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = run_loop(&fx, &cfg, Some(a.path()), RunOptions { observer: Some(&mut observer), ..Default::default() })
            .map_err(|e| e.to_string())?;
        if let Some(m) = mismatch {
            return Err(m);
        }
        let want = fx.pool.len().div_ceil(k);
        ensure(out.state.iterations.len() == want, || {
            format!("k={k}: {} iterations, expected {want}", out.state.iterations.len())
        })?;
        checked_iterations += want;

        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_loop(&fx, &cfg, Some(b.path()), RunOptions::default()).map_err(|e| e.to_string())?;
        ensure(checkpoint_bytes(a.path()) == checkpoint_bytes(b.path()), || format!("k={k}: checkpoints differ between runs"))?;

        let halts: BTreeSet<usize> = [1, want / 2, want - 1].into_iter().filter(|h| (1..want).contains(h)).collect();
        for halt in halts {
            let c = tempfile::tempdir().map_err(|e| e.to_string())?;
            run_loop(&fx, &cfg, Some(c.path()), RunOptions { halt_after: Some(halt), ..Default::default() })
                .map_err(|e| e.to_string())?;
            let resumed = run_loop(&fx, &cfg, Some(c.path()), RunOptions { resume: true, ..Default::default() })
                .map_err(|e| e.to_string())?;
            ensure(resumed.state == out.state && resumed.train_set == out.train_set, || {
                format!("k={k}: resume after {halt} diverged")
            })?;
            ensure(checkpoint_bytes(c.path()) == checkpoint_bytes(a.path()), || {
                format!("k={k}: resumed checkpoint after {halt} differs")
            })?;
        }
    }
    let took = start.elapsed();
    ensure(took < LOOP_BUDGET, || format!("took {took:.2?}, budget {LOOP_BUDGET:?}"))?;
    Ok(format!("k in {ks:?}: {checked_iterations} iterations, oracle-matched, bit-identical, resumable, {took:.2?}"))
}

fn conservation() -> Outcome {
    let mut runs = 0;
    let mut iterations = 0;
    for seed in 0..12u64 {
        let f = testkit::replay_fixture(1 + seed as usize % 4, 30, (seed as usize * 5) % 11, seed);
        let fx = Fixture { train: f.train, pool: f.pool, t2l: f.text_to_logic, l2t: f.logic_to_text };
        let universe: BTreeSet<String> =
            fx.train.iter().map(|p| p.id.clone()).chain(fx.pool.iter().map(|u| u.id.clone())).collect();
        for k in [1, 4, 9, 50] {
            let cfg = SelfTrainConfig {
                k,
                shuffle_seed: seed,
                verify_invariants: true,
                early_stop_if_no_qualified: seed % 2 == 0,
                ..Default::default()
            };
            let mut broken: Option<String> = None;
            let mut seen = 0;
            let mut observer = |v: &IterationView<'_>| {
                seen += 1;
                let t: BTreeSet<String> = v.state.train_ids.iter().cloned().collect();
                let u: BTreeSet<String> = v.state.pool_ids.iter().cloned().collect();
                let ok = t.len() == v.state.train_ids.len()
                    && u.len() == v.state.pool_ids.len()
                    && t.is_disjoint(&u)
                    && t.union(&u).cloned().collect::<BTreeSet<_>>() == universe;
                if !ok && broken.is_none() {
                    broken = Some(format!("seed {seed} k {k} iteration {}", v.iteration));
                }
            };
            run_loop(&fx, &cfg, None, RunOptions { observer: Some(&mut observer), ..Default::default() })
                .map_err(|e| format!("seed {seed} k {k}: {e}"))?;
            if let Some(b) = broken {
                return Err(b);
            }
            runs += 1;
            iterations += seen;
        }
    }
    Ok(format!("{runs} runs, {iterations} iterations, train ⊎ pool constant"))
}

// ---- real corpus (optional) -----------------------------------------------

fn find_split(dir: &Path, name: &str) -> Option<PathBuf> {
    [dir.join(format!("{name}.json")), dir.join("all_data").join(format!("{name}.json"))]
        .into_iter()
        .find(|p| p.exists())
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want
}

/// `None` when the corpus is not available.
fn corpus_statistics() -> Option<Outcome> {
    let dir = std::env::var_os("LOGIC2TEXT_DIR").map(PathBuf::from)?;
    Some((|| {
        let mut splits: HashMap<&str, Vec<ParallelPair>> = HashMap::new();
        for name in ["train", "valid", "test"] {
            let path = find_split(&dir, name).ok_or_else(|| format!("{name}.json not found under {}", dir.display()))?;
            let json = fs::read_to_string(&path).map_err(|e| e.to_string())?;
            splits.insert(name, convert_logic2text(&json, name).map_err(|e| format!("{}: {e}", path.display()))?);
        }
        let all: Vec<ParallelPair> = ["train", "valid", "test"].iter().flat_map(|n| splits[n].clone()).collect();
        let s = dataset_stats(&all);
        let mut problems = Vec::new();
        if s.examples != 10_753 {
            problems.push(format!("examples {}", s.examples));
        }
        for (name, got, want) in [
            ("avg nodes", s.avg_nodes, 9.00),
            ("avg function nodes", s.avg_function_nodes, 3.27),
            ("avg linearized length", s.avg_linearized_length, 24.35),
            ("avg description length", s.avg_description_length, 16.77),
        ] {
            if !within(got, want, STATS_TOL) {
                problems.push(format!("{name} {got:.2} vs {want}"));
            }
        }
        let schema = FunctionSchema::default_schema();
        let valid = all.iter().filter(|p| structure_verdict(&p.logic, &schema, 0.5).overall_pass).count();
        let rate = valid as f64 / all.len() as f64;
        if rate < VALIDATE_MIN {
            problems.push(format!("validate pass rate {:.2}%", 100.0 * rate));
        }
        let target = [2_555, 4_068, 1_943];
        let (th, _) = calibrate_thresholds(&form_depths(&splits["train"]), target);
        let counts = bucket_by_depth(&splits["train"], th).counts();
        for (got, want) in counts.iter().zip(target) {
            if !within(*got as f64, want as f64, BUCKET_TOL) {
                problems.push(format!("buckets {counts:?} at {th} vs {target:?}"));
                break;
            }
        }
        let summary = format!(
            "{} examples, nodes {:.2}, functions {:.2}, linearized {:.2}, description {:.2}, valid {:.2}%, buckets {counts:?} at {th}",
            s.examples, s.avg_nodes, s.avg_function_nodes, s.avg_linearized_length, s.avg_description_length, 100.0 * rate
        );
        if problems.is_empty() {
            Ok(summary)
        } else {
            Err(format!("{}; {summary}", problems.join("; ")))
        }
    })())
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("parser round-trip", parser_round_trip),
        ("rule fuzzing", rule_fuzzing),
        ("lcs oracle", lcs_oracle),
        ("metric golden file", metric_golden),
        ("self-training determinism", loop_determinism),
        ("conservation invariant", conservation),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match guarded(check) {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    match guarded(|| corpus_statistics().unwrap_or(Ok(String::new()))) {
        Ok(d) if d.is_empty() => println!("SKIP  corpus statistics: set LOGIC2TEXT_DIR to the Logic2Text data directory"),
        Ok(d) => println!("PASS  corpus statistics: {d}"),
        Err(d) => {
            failed += 1;
            println!("FAIL  corpus statistics: {d}");
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
