//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p insight-core --test acceptance`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use insight_core::device::builtin_profiles;
use insight_core::emit::grammar::normalize_action;
use insight_core::emit::{
    emit_corpus, parse_action, score_episodes, AmbiguityScorer, EmitConfig, Emitter, Role, SampleFormat, TargetStyle,
};
use insight_core::fixture::{visible_among, FixtureCorpus, PageFixture, Transition, TransitionKind};
use insight_core::observation::content_key;
use insight_core::pipeline::{canonical_jsonl, read_corpus, run_generate, GenerateConfig};
use insight_core::policy::{
    build_action_set, refine, rule_input_proximity, rule_persistence, rule_zindex, ActionCandidate, PolicyState,
};
use insight_core::postprocess::{corpus_stats, filter_episodes, DropReason, FilterOptions};
use insight_core::recorder::replay_in_fixture;
use insight_core::synth::{chain_app, link_node, text_node};
use insight_core::{
    run_episode, Action, Episode, EpisodeStatus, FixtureApp, FixtureSession, Limits, LogicalClock, NodeRecord,
    Observation, PolicyConfig, Rect, Size,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

const SEED: u64 = 20_240_601;
const EPISODES_PER_REF: usize = 20;
const MAX_STEPS: usize = 5;
const TIME_LIMIT_S: f64 = 60.0;
const ORACLE_RUNS: u64 = 1000;
const ORACLE_COVERAGE: f64 = 0.90;
const RULE_CASES: u32 = 1000;
const INJECTED_EACH: usize = 50;
const STYLE_SAMPLES: usize = 10_000;
const STYLE_RATIO: f64 = 0.70;
const STYLE_TOLERANCE: f64 = 0.02;

type Outcome = Result<String, String>;

struct Gate {
    failed: usize,
}

impl Gate {
    fn check(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn generate(corpus: &FixtureCorpus, out: &Path, workers: usize) -> (Vec<Episode>, f64) {
    let cfg = GenerateConfig {
        episodes_per_ref: EPISODES_PER_REF,
        seed: SEED,
        workers,
        limits: Limits {
            max_steps: MAX_STEPS,
            ..Limits::default()
        },
        ..GenerateConfig::new(builtin_profiles())
    };
    let t = Instant::now();
    run_generate(corpus, &corpus.start_refs(), out, &cfg).expect("generate");
    let secs = t.elapsed().as_secs_f64();
    (read_corpus(out).expect("read corpus"), secs)
}

// ---------------------------------------------------------------------------
// Oracle equivalence

/// Four pages, at most three candidates each, contents smaller than every
/// built-in viewport so no scroll is ever available, and no inputs.
fn oracle_app() -> FixtureApp {
    let click = |node: &str, to: &str| Transition {
        node_id: node.into(),
        action_kind: TransitionKind::Click,
        target_page_id: to.into(),
    };
    let page = |id: &str, nodes: Vec<NodeRecord>, transitions: Vec<Transition>| PageFixture {
        page_id: id.into(),
        content_w: 380,
        content_h: 600,
        nodes,
        transitions,
    };
    let mut pages = BTreeMap::new();
    pages.insert(
        "home".into(),
        page(
            "home",
            vec![
                text_node("t", "h1", "home", Rect::new(0, 0, 300, 40)),
                link_node("to-a", "section a", Rect::new(10, 50, 120, 30)),
                link_node("to-b", "section b", Rect::new(10, 100, 120, 30)),
                link_node("help", "help", Rect::new(10, 150, 80, 30)),
            ],
            vec![click("to-a", "a"), click("to-b", "b"), click("help", "c")],
        ),
    );
    pages.insert(
        "a".into(),
        page(
            "a",
            vec![
                text_node("t", "h1", "page a", Rect::new(0, 0, 300, 40)),
                link_node("help", "help", Rect::new(200, 300, 80, 30)),
                link_node("next", "next", Rect::new(10, 100, 120, 30)),
                link_node("like", "like", Rect::new(10, 150, 60, 30)),
            ],
            vec![click("help", "c"), click("next", "b")],
        ),
    );
    pages.insert(
        "b".into(),
        page(
            "b",
            vec![
                text_node("t", "h1", "page b", Rect::new(0, 0, 300, 40)),
                link_node("under", "read more", Rect::new(10, 400, 120, 30)),
                NodeRecord {
                    z_index: 5,
                    opaque: true,
                    ..text_node("modal", "div", "newsletter", Rect::new(0, 60, 380, 200))
                },
                NodeRecord {
                    z_index: 6,
                    ..link_node("close", "close", Rect::new(300, 70, 60, 30))
                },
            ],
            vec![click("under", "c"), click("close", "a")],
        ),
    );
    pages.insert(
        "c".into(),
        page("c", vec![text_node("t", "h1", "help page", Rect::new(0, 0, 300, 40))], vec![]),
    );
    FixtureApp {
        app_id: "oracle.test".into(),
        initial_page: "home".into(),
        pages,
    }
}

/// The nodes an observer sees on `page`: everything that is not fully
/// covered by a single opaque node of strictly higher z.
fn oracle_visible(page: &PageFixture) -> Vec<&NodeRecord> {
    let covers = |o: &NodeRecord, n: &NodeRecord| {
        o.opaque
            && o.z_index > n.z_index
            && o.rect.x <= n.rect.x
            && o.rect.y <= n.rect.y
            && o.rect.x + o.rect.w >= n.rect.x + n.rect.w
            && o.rect.y + o.rect.h >= n.rect.y + n.rect.h
    };
    page.nodes
        .iter()
        .filter(|n| n.rect.w > 0 && n.rect.h > 0)
        .filter(|n| !page.nodes.iter().any(|o| o.node_id != n.node_id && covers(o, n)))
        .collect()
}

/// Legal click targets on `page` given the previous page, per the written
/// rules: top layer only, then drop nodes that also appeared on the
/// previous page unless that drops everything.
fn oracle_legal(app: &FixtureApp, page_id: &str, prev: Option<&str>) -> Vec<String> {
    let page = &app.pages[page_id];
    let visible = oracle_visible(page);
    let clickable: Vec<&NodeRecord> = visible.iter().copied().filter(|n| n.clickable).collect();
    let Some(top) = clickable.iter().map(|n| n.z_index).max() else {
        return vec![];
    };
    let top_layer: Vec<&NodeRecord> = clickable.into_iter().filter(|n| n.z_index == top).collect();
    let Some(prev) = prev else {
        return top_layer.iter().map(|n| n.node_id.clone()).collect();
    };
    let key = |n: &NodeRecord| (n.tag.clone(), n.text.clone(), n.rect.w / 8, n.rect.h / 8);
    let seen: HashSet<_> = oracle_visible(&app.pages[prev]).into_iter().map(key).collect();
    let fresh: Vec<&NodeRecord> = top_layer.iter().copied().filter(|n| !seen.contains(&key(n))).collect();
    let chosen = if fresh.is_empty() { top_layer } else { fresh };
    chosen.iter().map(|n| n.node_id.clone()).collect()
}

type Walk = Vec<(String, String)>;

fn enumerate(app: &FixtureApp, max_steps: usize) -> BTreeSet<Walk> {
    fn go(app: &FixtureApp, page: &str, prev: Option<&str>, walk: &mut Walk, max: usize, out: &mut BTreeSet<Walk>) {
        let legal = if walk.len() == max { vec![] } else { oracle_legal(app, page, prev) };
        if legal.is_empty() {
            out.insert(walk.clone());
            return;
        }
        for node in legal {
            let next = app.pages[page]
                .transitions
                .iter()
                .find(|t| t.node_id == node)
                .map(|t| t.target_page_id.clone())
                .unwrap_or_else(|| page.to_string());
            walk.push((page.to_string(), node));
            go(app, &next, Some(page), walk, max, out);
            walk.pop();
        }
    }
    let mut out = BTreeSet::new();
    go(app, &app.initial_page, None, &mut vec![], max_steps, &mut out);
    out
}

fn walk_of(ep: &Episode) -> Walk {
    ep.steps
        .iter()
        .map(|s| {
            let page = s.observation.page_ref.rsplit('/').next().unwrap().to_string();
            (page, s.action.node_id().unwrap_or("<scroll>").to_string())
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let app = oracle_app();
    app.validate().map_err(|e| e.to_string())?;
    for page in app.pages.keys() {
        let n = oracle_visible(&app.pages[page]).iter().filter(|n| n.clickable).count();
        ensure(n <= 3, || format!("page {page} has {n} candidates"))?;
    }
    let max_steps = 3;
    let legal = enumerate(&app, max_steps);
    let app = Arc::new(app);
    let limits = Limits {
        max_steps,
        ..Limits::default()
    };
    let profiles = builtin_profiles();
    let mut seen = BTreeSet::new();
    for seed in 0..ORACLE_RUNS {
        let profile = &profiles[seed as usize % profiles.len()];
        let mut env = FixtureSession::for_profile(app.clone(), profile);
        let ep = run_episode(&mut env, profile, &limits, seed, &PolicyConfig::default(), &LogicalClock::new(0));
        let walk = walk_of(&ep);
        ensure(legal.contains(&walk), || format!("seed {seed} produced unlisted walk {walk:?}"))?;
        seen.insert(walk);
    }
    let coverage = seen.len() as f64 / legal.len() as f64;
    ensure(coverage >= ORACLE_COVERAGE, || {
        format!("covered {}/{} = {coverage:.3}", seen.len(), legal.len())
    })?;
    Ok(format!(
        "{ORACLE_RUNS} runs, all within {} enumerated episodes, coverage {:.1}%",
        legal.len(),
        coverage * 100.0
    ))
}

// ---------------------------------------------------------------------------
// Rule properties

const TAGS: &[&str] = &["a", "button", "input", "div"];
const TEXTS: &[&str] = &["home", "next", "search", "", "buy now"];

fn arb_node() -> impl Strategy<Value = NodeRecord> {
    (
        (0usize..TAGS.len(), 0usize..TEXTS.len()),
        (0i64..400, 0i64..800, 1i64..160, 1i64..80),
        -2i64..4,
        (any::<bool>(), any::<bool>(), prop::bool::weighted(0.15)),
    )
        .prop_map(|((tag, text), (x, y, w, h), z, (clickable, inputable, opaque))| NodeRecord {
            node_id: String::new(),
            parent_id: None,
            tag: TAGS[tag].into(),
            text: TEXTS[text].into(),
            rect: Rect::new(x, y, w, h),
            z_index: z,
            clickable,
            inputable,
            opaque,
        })
}

fn observation(mut nodes: Vec<NodeRecord>, prefix: &str) -> Observation {
    for (i, n) in nodes.iter_mut().enumerate() {
        n.node_id = format!("{prefix}{i}");
    }
    let vp = Rect::new(0, 0, 400, 800);
    let visible = visible_among(&nodes, vp);
    Observation::new(0, "p://x", vp, Size { w: 400, h: 800 }, visible, None)
}

fn live(cands: &[ActionCandidate]) -> Vec<&ActionCandidate> {
    cands.iter().filter(|c| c.filtered_by.is_none()).collect()
}

fn run_property(
    name: &str,
    strategy: impl Strategy<Value = (Vec<NodeRecord>, Vec<NodeRecord>, usize)>,
    test: impl Fn(Observation, Observation, usize) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: RULE_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |(page, prev, pick)| test(observation(page, "n"), observation(prev, "m"), pick))
        .map_err(|e| format!("{name}: {e}"))
}

fn cases() -> impl Strategy<Value = (Vec<NodeRecord>, Vec<NodeRecord>, usize)> {
    (
        prop::collection::vec(arb_node(), 0..14),
        prop::collection::vec(arb_node(), 0..10),
        0usize..64,
    )
}

/// Cases where the previous page repeats some of the current nodes.
fn overlapping_cases() -> impl Strategy<Value = (Vec<NodeRecord>, Vec<NodeRecord>, usize)> {
    (prop::collection::vec(arb_node(), 1..12), prop::collection::vec(any::<bool>(), 12), 0usize..64).prop_map(
        |(page, keep, pick)| {
            let prev = page.iter().zip(&keep).filter(|(_, k)| **k).map(|(n, _)| n.clone()).collect();
            (page, prev, pick)
        },
    )
}

fn rule_properties() -> Outcome {
    run_property("subset", cases(), |obs, prev, pick| {
        let built = build_action_set(&obs);
        let mut state = PolicyState::default();
        if let Some(input) = obs.nodes.iter().filter(|n| n.inputable).nth(pick % obs.nodes.len().max(1)) {
            state.advance(
                &prev,
                &Action::Input {
                    node_id: input.node_id.clone(),
                    point: input.rect.center(),
                    text: "x".into(),
                },
            );
            state.last_input_node = Some(input.clone());
        } else {
            state.prev_observation = Some(prev.clone());
        }
        let refined = refine(&obs, &state);
        prop_assert_eq!(refined.len(), built.len());
        for c in live(&refined) {
            prop_assert!(built.iter().any(|b| b.action == c.action));
        }
        let z = rule_zindex(built.clone());
        let p = rule_persistence(z.clone(), Some(&prev));
        let q = rule_input_proximity(p.clone(), &state);
        for (before, after) in [(&built, &z), (&z, &p), (&p, &q)] {
            for c in live(after) {
                prop_assert!(live(before).iter().any(|b| b.action == c.action));
            }
        }
        Ok(())
    })?;

    run_property("z-max survivor", cases(), |obs, _, _| {
        let built = build_action_set(&obs);
        let out = rule_zindex(built.clone());
        let top = built.iter().filter_map(|c| c.source_node.as_ref()).map(|n| n.z_index).max();
        for c in live(&out) {
            prop_assert_eq!(Some(c.source_node.as_ref().unwrap().z_index), top);
        }
        if top.is_some() {
            prop_assert!(!live(&out).is_empty());
            let expected = built.iter().filter(|c| c.source_node.as_ref().map(|n| n.z_index) == top).count();
            prop_assert_eq!(live(&out).len(), expected);
        }
        Ok(())
    })?;

    run_property("persistence exception identity", overlapping_cases(), |obs, prev, _| {
        let cands = rule_zindex(build_action_set(&obs));
        let seen: HashSet<_> = prev.nodes.iter().map(content_key).collect();
        let shared = |c: &ActionCandidate| seen.contains(&content_key(c.source_node.as_ref().unwrap()));
        let out = rule_persistence(cands.clone(), Some(&prev));
        if live(&cands).iter().all(|c| shared(c)) {
            prop_assert_eq!(out, cands);
        } else {
            for (a, b) in cands.iter().zip(&out) {
                let expect_live = a.filtered_by.is_none() && !shared(a);
                prop_assert_eq!(b.filtered_by.is_none(), expect_live);
            }
        }
        Ok(())
    })?;

    run_property("proximity overlap and separation", cases(), |obs, _, pick| {
        let inputs: Vec<&NodeRecord> = obs.nodes.iter().filter(|n| n.inputable).collect();
        if inputs.is_empty() {
            return Ok(());
        }
        let q = inputs[pick % inputs.len()].clone();
        let state = PolicyState {
            prev_observation: None,
            last_input_node: Some(q.clone()),
        };
        let cands = rule_zindex(build_action_set(&obs));
        let out = rule_input_proximity(cands.clone(), &state);
        let m = q.rect.w.min(q.rect.h);
        let grown = Rect::new(q.rect.x - m, q.rect.y - m, q.rect.w + 2 * m, q.rect.h + 2 * m);
        let overlaps = |r: &Rect| r.x < grown.x + grown.w && grown.x < r.x + r.w && r.y < grown.y + grown.h && grown.y < r.y + r.h;
        let order = |n: &NodeRecord| (n.rect.y, n.rect.x, n.node_id.clone());
        let live_in: Vec<&ActionCandidate> = live(&cands);
        let anchor = live_in.iter().filter(|c| order(c.source_node.as_ref().unwrap()) < order(&q)).count();
        for (pos, c) in live_in.iter().enumerate() {
            let n = c.source_node.as_ref().unwrap();
            let kept = out.iter().any(|o| o.action == c.action && o.filtered_by.is_none());
            prop_assert_eq!(kept, overlaps(&n.rect) && pos.abs_diff(anchor) <= 2, "candidate {}", n.node_id);
        }
        Ok(())
    })?;
    Ok(format!("{RULE_CASES} cases each for 4 properties, 0 violations"))
}

// ---------------------------------------------------------------------------
// Postprocess soundness

fn blank_copy(ep: &Episode, i: usize) -> Episode {
    let mut e = ep.clone();
    e.episode_id = format!("{}-blank{i}", ep.episode_id);
    let target = e.steps.len() / 2;
    let o = &e.steps[target].observation;
    e.steps[target].observation = Observation::new(o.step_index, o.page_ref.clone(), o.viewport, o.content_size, vec![], None);
    e
}

fn duplicate_copy(ep: &Episode, i: usize) -> Episode {
    let mut e = ep.clone();
    e.episode_id = format!("{}-dup{i}", ep.episode_id);
    let first = e.steps[0].observation.clone();
    let last = e.final_observation.as_mut().unwrap();
    *last = Observation {
        step_index: last.step_index,
        ..first
    };
    e
}

fn postprocess_soundness(kept: &[Episode]) -> Outcome {
    let bases: Vec<&Episode> = kept.iter().filter(|e| !e.steps.is_empty()).collect();
    ensure(!bases.is_empty(), || "no base episodes".into())?;
    let mut corpus = kept.to_vec();
    let mut injected = BTreeSet::new();
    for i in 0..INJECTED_EACH {
        let b = blank_copy(bases[i % bases.len()], i);
        let d = duplicate_copy(bases[(i * 7 + 3) % bases.len()], i);
        injected.insert(b.episode_id.clone());
        injected.insert(d.episode_id.clone());
        corpus.push(b);
        corpus.push(d);
    }
    let (out, report) = filter_episodes(corpus, FilterOptions::default());
    let dropped: usize = report.dropped_by_reason.values().sum();
    ensure(dropped == 2 * INJECTED_EACH, || format!("dropped {dropped}"))?;
    ensure(report.dropped_by_reason.get(&DropReason::BlankPage) == Some(&INJECTED_EACH), || {
        format!("{:?}", report.dropped_by_reason)
    })?;
    ensure(out.iter().all(|e| !injected.contains(&e.episode_id)), || "an injected episode survived".into())?;
    ensure(out.len() == kept.len(), || "a clean episode was dropped".into())?;
    let (again, r2) = filter_episodes(out.clone(), FilterOptions::default());
    ensure(again == out && r2.dropped_by_reason.is_empty(), || "filtering is not idempotent".into())?;
    Ok(format!("dropped exactly the {dropped} injected episodes; second pass drops 0"))
}

// ---------------------------------------------------------------------------
// Emission accounting

fn emission_accounting(kept: &[Episode]) -> Outcome {
    let scores = score_episodes(kept, &AmbiguityScorer);
    let cfg = EmitConfig {
        style_ratio: STYLE_RATIO,
        seed: SEED,
    };
    let emitter = Emitter::default();
    let (samples, report) = emit_corpus(kept, &scores, &cfg, &emitter).map_err(|e| e.to_string())?;
    let by_id: BTreeMap<&str, &Episode> = kept.iter().map(|e| (e.episode_id.as_str(), e)).collect();
    let eligible = kept.iter().filter(|e| e.action_count() >= 2).count();
    let reorder = samples.iter().filter(|s| s.format == SampleFormat::Reorder).count();
    ensure(reorder == eligible / 2, || format!("format 2: {reorder} != floor({eligible}/2)"))?;
    ensure(report.reorder == reorder, || "report disagrees".into())?;
    let mut actions = 0;
    for s in &samples {
        let ep = by_id[s.episode_id.as_str()];
        let t = ep.action_count();
        ensure(s.images.len() == t + 1, || format!("{}: {} images for T={t}", s.sample_id, s.images.len()))?;
        ensure(s.placeholder_count("<image>") == s.images.len(), || format!("{}: placeholders", s.sample_id))?;
        if s.format == SampleFormat::Stepwise {
            let texts: Vec<&str> =
                s.turns.iter().filter(|t| t.role == Role::Assistant).map(|t| t.text.as_str()).collect();
            ensure(texts.len() == t, || format!("{}: {} answers", s.sample_id, texts.len()))?;
            for (step, text) in ep.steps.iter().zip(texts) {
                let parsed = parse_action(text).map_err(|e| e.to_string())?;
                let expected =
                    normalize_action(&step.action, &step.observation, s.target_style).map_err(|e| e.to_string())?;
                ensure(parsed == expected && parsed.to_string() == text, || format!("round trip of {text:?}"))?;
                actions += 1;
            }
        }
    }

    // The style draw over a 10,000-sample corpus built from renamed copies.
    let base: Vec<&Episode> = kept.iter().filter(|e| e.action_count() >= 1).collect();
    let many: Vec<Episode> = (0..STYLE_SAMPLES)
        .map(|i| {
            let mut e = base[i % base.len()].clone();
            e.episode_id = format!("{:016x}", i);
            e
        })
        .collect();
    let many_scores = score_episodes(&many, &AmbiguityScorer);
    let (big, _) = emit_corpus(&many, &many_scores, &cfg, &emitter).map_err(|e| e.to_string())?;
    ensure(big.len() == STYLE_SAMPLES, || format!("{} samples", big.len()))?;
    let points = big.iter().filter(|s| s.target_style == TargetStyle::Point).count();
    let share = points as f64 / big.len() as f64;
    ensure((share - STYLE_RATIO).abs() <= STYLE_TOLERANCE, || format!("point share {share:.4}"))?;
    Ok(format!(
        "{} samples, images = T+1 everywhere, format 2 = {reorder} = floor({eligible}/2), {actions} actions round-trip, point share {share:.4} over {}",
        samples.len(),
        big.len()
    ))
}

// ---------------------------------------------------------------------------
// Stats

fn stats_report() -> Outcome {
    // Hand count: chains of 2..=6 pages give 2+3+4+5+6 = 20 observations;
    // www.a.com and a.com share a.com, shop.c.net and c.net share c.net.
    const EPISODES: usize = 5;
    const IMAGES: usize = 20;
    const DOMAINS: usize = 3;
    let apps = [("www.a.com", 2), ("a.com", 3), ("b.org", 4), ("c.net", 5), ("shop.c.net", 6)];
    let corpus = FixtureCorpus::new(apps.iter().map(|(id, n)| chain_app(id, *n))).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = GenerateConfig {
        episodes_per_ref: 1,
        seed: SEED,
        ..GenerateConfig::new(builtin_profiles())
    };
    run_generate(&corpus, &corpus.start_refs(), dir.path(), &cfg).map_err(|e| e.to_string())?;
    let eps = read_corpus(dir.path()).map_err(|e| e.to_string())?;
    let collected = eps.len();
    let (kept, _) = filter_episodes(eps, FilterOptions::default());
    let s = corpus_stats(&kept, collected);
    ensure((s.episodes, s.images, s.domains) == (EPISODES, IMAGES, DOMAINS), || format!("{s:?}"))?;
    Ok(format!("episodes {}, images {}, domains {}", s.episodes, s.images, s.domains))
}

fn main() {
    let mut gate = Gate { failed: 0 };
    let corpus = FixtureCorpus::load_dir(&fixtures_dir()).expect("fixture corpus");
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();

    let (run_a, secs_a) = generate(&corpus, dirs[0].path(), 4);
    let (run_b, secs_b) = generate(&corpus, dirs[1].path(), 4);
    gate.check("determinism", || {
        ensure(corpus.len() >= 20, || format!("{} fixture apps", corpus.len()))?;
        ensure(run_a.len() == corpus.len() * EPISODES_PER_REF && run_a.len() >= 500, || {
            format!("{} episodes", run_a.len())
        })?;
        ensure(canonical_jsonl(&run_a) == canonical_jsonl(&run_b), || "runs differ".into())?;
        ensure(secs_a < TIME_LIMIT_S && secs_b < TIME_LIMIT_S, || format!("{secs_a:.1}s / {secs_b:.1}s"))?;
        Ok(format!(
            "{} apps, {} episodes, byte-identical; {secs_a:.2}s and {secs_b:.2}s",
            corpus.len(),
            run_a.len()
        ))
    });

    gate.check("worker-count independence", || {
        let (one, _) = generate(&corpus, dirs[2].path(), 1);
        let eight_dir = tempfile::tempdir().unwrap();
        let (eight, _) = generate(&corpus, eight_dir.path(), 8);
        ensure(canonical_jsonl(&one) == canonical_jsonl(&eight), || "workers=1 and workers=8 differ".into())?;
        Ok(format!("{} episodes identical for workers=1 and workers=8", one.len()))
    });

    gate.check("oracle equivalence", oracle_equivalence);
    gate.check("rule properties", rule_properties);

    gate.check("stop condition", || {
        let longest = run_a.iter().chain(&run_b).map(Episode::action_count).max().unwrap_or(0);
        ensure(longest <= MAX_STEPS, || format!("an episode has {longest} actions"))?;
        let complete = run_a.iter().filter(|e| e.status == EpisodeStatus::Complete).count();
        ensure(
            run_a.iter().filter(|e| e.status == EpisodeStatus::Complete).all(|e| e.action_count() == MAX_STEPS),
            || "a complete episode stopped early".into(),
        )?;
        Ok(format!("max {longest} actions over {} episodes; {complete} reached the limit", run_a.len() + run_b.len()))
    });

    let collected = run_a.len();
    let (kept, drops) = filter_episodes(run_a.clone(), FilterOptions::default());

    gate.check("replay closure", || {
        for e in &kept {
            let app = corpus.get(&e.start_ref).ok_or_else(|| format!("no app for {}", e.start_ref))?;
            replay_in_fixture(app, e, &PolicyConfig::default()).map_err(|err| err.to_string())?;
        }
        Ok(format!("{} of {} kept episodes replay exactly", kept.len(), kept.len()))
    });

    gate.check("postprocess soundness", || postprocess_soundness(&kept));
    gate.check("emission accounting", || emission_accounting(&kept));
    gate.check("stats report", stats_report);

    println!(
        "summary: {} collected, {} kept ({:.1}%), {} criteria failed",
        collected,
        drops.kept,
        drops.retention * 100.0,
        gate.failed
    );
    if gate.failed > 0 {
        std::process::exit(1);
    }
}
