//! Acceptance suite. One PASS/FAIL line per criterion; exits non-zero if
//! any criterion fails. Seeds, sizes and time budgets are pinned below.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sisco_core::api::search_body;
use sisco_core::engine::{
    run_scripted, validate_tree, DecisionEngine, DecisionTree, Interaction, InteractionType, NodeKind,
    ProcedureClass, SessionStatus, ANSWER_NO, ANSWER_YES, KNOWN_PREDICATES,
};
use sisco_core::ingest::{builtin_bundle, builtin_opener, load_bundle, load_kb, Bundle, IngestError, Manifest, BUILTIN_MANIFEST};
use sisco_core::kb::{
    ClassNode, EntrySource, EntryTerm, Exclusion, GlossaryKind, GlossaryTerm, HierarchyIssue, Level, MappingQuality,
    Note, NoteKind,
};
use sisco_core::rules::{validate_selection, AlertKind};
use sisco_core::text::{tokenize, AttributeWeightTable, Query, SearchIndex};
use sisco_core::{KnowledgeBase, Section};

const REPLAY_BUDGET: Duration = Duration::from_secs(1);
const BRUTE_FORCE_BUDGET: Duration = Duration::from_secs(60);
const SCALE_QUERY_BUDGET: Duration = Duration::from_millis(100);

const BRUTE_FORCE_KBS: usize = 200;
const BRUTE_FORCE_QUERIES: usize = 50;
const BRUTE_FORCE_MAX_CLASSES: usize = 500;
const BRUTE_FORCE_MAX_ATTRIBUTES: usize = 5;
const MONOTONE_PAIRS: usize = 1000;
const RELATED_QUERIES: usize = 100;
const TREE_MUTANTS: usize = 100;
const ENGINE_SESSIONS: usize = 1000;
const RESIDUAL_SESSIONS: usize = 200;
const SCALE_MIN_TERMS: usize = 300_000;
const SCALE_QUERIES: usize = 40;

const RENAL_PC: [&str; 4] = ["585.9", "250.40", "757.33", "404.10"];
const RENAL_PI: [&str; 4] = ["89.52", "00.25", "48.24", "55.24"];

type Outcome = Result<String, String>;

fn main() -> ExitCode {
    let criteria: &[(&str, fn() -> Outcome)] = &[
        ("diabetes search replay", diabetes_search_replay),
        ("renal biopsy session replay", renal_biopsy_session_replay),
        ("brute-force search equivalence", brute_force_search_equivalence),
        ("monotone filtering", monotone_filtering),
        ("related-term oracle", related_term_oracle),
        ("weight-table conformance", weight_table_conformance),
        ("tree validation", tree_validation),
        ("engine determinism and termination", engine_determinism),
        ("residual-procedure invariance", residual_invariance),
        ("coding-rule alerts", coding_rule_alerts),
        ("ingestion integrity", ingestion_integrity),
        ("scale smoke test", scale_smoke_test),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{ms} ms]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{ms} ms]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn strings(codes: &[&str]) -> Vec<String> {
    codes.iter().map(|c| c.to_string()).collect()
}

fn bundle() -> Bundle {
    builtin_bundle().expect("bundled data loads")
}

// ---------------------------------------------------------------------------
// Full-scan oracle: reads the KB records directly, weights written out by
// hand in thousandths.

fn oracle_weight(label: &str) -> u64 {
    match label {
        "title" => 10_000,
        "additional_title" => 7_500,
        "inclusion" => 2_500,
        "exclusion" | "note" | "glossary_other" => 0,
        "alphabetical_main" | "neoplasm_main" => 2_500,
        "alphabetical_sub" | "neoplasm_sub" => 100,
        "glossary_physicians" | "glossary_rare_diseases" | "glossary_emergency_sei" | "glossary_mesh" => 100,
        other => panic!("no oracle weight for {other}"),
    }
}

/// `(label, text)` of every attribute of every class in `section`.
fn oracle_attributes(kb: &KnowledgeBase, section: Section) -> BTreeMap<String, Vec<(String, String)>> {
    let mut out: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for node in kb.nodes_in(section) {
        let attrs = out.entry(node.code.clone()).or_default();
        attrs.push(("title".into(), node.title.clone()));
        for t in &node.additional_title_terms {
            attrs.push(("additional_title".into(), t.clone()));
        }
        for t in &node.inclusions {
            attrs.push(("inclusion".into(), t.clone()));
        }
        for e in &node.exclusions {
            attrs.push(("exclusion".into(), e.text.clone()));
        }
        for n in &node.notes {
            attrs.push(("note".into(), n.text.clone()));
        }
    }
    for term in kb.entry_terms() {
        if let Some(attrs) = out.get_mut(&term.target_code) {
            let source = match term.source {
                EntrySource::AlphabeticalIndex => "alphabetical",
                EntrySource::NeoplasmTable => "neoplasm",
            };
            let depth = if term.indentation == 0 { "main" } else { "sub" };
            attrs.push((format!("{source}_{depth}"), term.text.clone()));
        }
    }
    for term in kb.glossary_terms() {
        if let Some(attrs) = out.get_mut(&term.target_code) {
            attrs.push((format!("glossary_{}", term.glossary.as_str()), term.text.clone()));
        }
    }
    out
}

/// Every class with an attribute containing all `terms`, as (code, score
/// in thousandths), sorted by score desc then code.
fn oracle_search(
    attrs: &BTreeMap<String, Vec<(String, String)>>,
    terms: &[String],
    tokens: impl Fn(&str) -> Vec<String>,
) -> Vec<(String, u64)> {
    let mut hits = Vec::new();
    for (code, list) in attrs {
        let mut score = 0;
        let mut matched = false;
        for (label, text) in list {
            let toks = tokens(text);
            if terms.iter().all(|t| toks.contains(t)) {
                matched = true;
                score += oracle_weight(label);
            }
        }
        if matched {
            hits.push((code.clone(), score));
        }
    }
    hits.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    hits
}

fn index_search(index: &SearchIndex, section: Section, terms: &[String]) -> Vec<(String, u64)> {
    index
        .search_all(section, terms)
        .map(|rs| rs.into_iter().map(|r| (r.code, r.score.milli())).collect())
        .unwrap_or_default()
}

// ---------------------------------------------------------------------------

fn diabetes_search_replay() -> Outcome {
    let started = Instant::now();
    let b = bundle();
    let index = SearchIndex::build(&b.kb, AttributeWeightTable::default());
    let d = Section::Diagnoses;

    let query = Query::new("diabete mellito", d, 5);
    let top: BTreeSet<String> = index.search(&query).map_err(|e| e.to_string())?.into_iter().map(|r| r.code).collect();
    let expected: BTreeSet<String> = ["775.1", "648.0", "648.8", "250.1", "250"].iter().map(|s| s.to_string()).collect();
    ensure(top == expected, || format!("top-5 {top:?}, expected {expected:?}"))?;

    let oracle = oracle_search(&oracle_attributes(&b.kb, d), &query.terms, tokenize);
    let full = index_search(&index, d, &query.terms);
    ensure(full == oracle, || format!("ranking {full:?} differs from oracle {oracle:?}"))?;

    let q = Query::new("diabete", d, 50);
    let results = index.search_all(d, &q.terms).map_err(|e| e.to_string())?;
    let related = index.related_terms(&q, &results);
    ensure(related.iter().any(|t| t.token == "mellito"), || "no related term mellito".into())?;

    let suggestions: Vec<String> = index.autocomplete("diabete", d, 1000).iter().map(|s| s.to_lowercase()).collect();
    for wanted in ["pre-diabete", "diabete-nanismo-obesità"] {
        ensure(suggestions.iter().any(|s| s == wanted), || format!("no suggestion {wanted}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < REPLAY_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("top-5 {top:?}, {} ranked results match the oracle", full.len()))
}

const RENAL_ANSWERS: &str = "404.10\nYES\n585.9,250.40\n250.40\nNO\n";
const RENAL_GOLDEN: &str = r#"{"id":"golden","state":13,"message":"Indicare la condizione patologica che ha determinato l'intervento","type":"ask_single_code","allowed_answers":["585.9","250.40","757.33","404.10"]}
{"id":"golden","state":15,"message":"Sono presenti condizioni patologiche non correlate all'intervento?","type":"ask_binary","allowed_answers":["YES","NO"]}
{"id":"golden","state":18,"message":"Identificare una o più condizioni patologiche non correlate all'intervento","type":"ask_multicode","allowed_answers":["585.9","250.40","757.33"]}
{"id":"golden","state":20,"message":"Indicare la condizione patologica che ha consumato più risorse durante il ricovero","type":"ask_single_code","allowed_answers":["585.9","250.40"]}
{"id":"golden","state":22,"message":"La condizione indicata ha richiesto più risorse dell'intervento?","type":"ask_binary","allowed_answers":["YES","NO"]}
{"id":"golden","state":222,"message":"Condizione principale: condizione che ha determinato l'intervento","type":"result","verdict":["404.10"]}
"#;

fn renal_biopsy_session_replay() -> Outcome {
    let started = Instant::now();
    let b = bundle();
    let engine = DecisionEngine::new(&b.tree, &b.procedure_sets, &b.kb);
    let pc = strings(&RENAL_PC);
    let pi = strings(&RENAL_PI);

    let (_, first) = engine.start_session("golden", &pc, &pi).map_err(|e| e.to_string())?;
    ensure(first.message == "Indicare la condizione patologica che ha determinato l'intervento", || {
        format!("first question {:?}", first.message)
    })?;
    ensure(first.allowed_answers.as_deref() == Some(&pc[..]), || {
        format!("first answers {:?}", first.allowed_answers)
    })?;

    let answers: Vec<Vec<String>> = RENAL_ANSWERS
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    let (transcript, state) = run_scripted(&engine, "golden", &pc, &pi, &answers).map_err(|e| e.to_string())?;
    ensure(state.status == SessionStatus::Finished, || format!("status {:?}", state.status))?;
    let verdict = state.verdict.clone().unwrap_or_default();
    ensure(!verdict.is_empty() && verdict.iter().all(|c| pc.contains(c)), || format!("verdict {verdict:?}"))?;

    let mut text = String::new();
    for step in &transcript.steps {
        text.push_str(&serde_json::to_string(&step.interaction).map_err(|e| e.to_string())?);
        text.push('\n');
    }
    ensure(text == RENAL_GOLDEN, || format!("transcript differs from golden:\n{text}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < REPLAY_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{} interactions byte-equal to golden, verdict {verdict:?}", transcript.steps.len()))
}

// ---------------------------------------------------------------------------

const MINI_VOCABULARY: [&str; 24] = [
    "acuta", "cronica", "renale", "cardiaca", "infezione", "frattura", "tumore", "benigno", "maligno", "diabete",
    "ipertensione", "polmonite", "ulcera", "gastrica", "anemia", "sindrome", "congenita", "neonatale", "biopsia",
    "asportazione", "rene", "fegato", "osso", "cute",
];
const MINI_STOP_WORDS: [&str; 4] = ["di", "con", "della", "e"];

fn mini_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=5);
    let mut words = Vec::new();
    for _ in 0..n {
        let mut w = MINI_VOCABULARY.choose(rng).unwrap().to_string();
        if rng.gen_bool(0.2) {
            w = w.to_uppercase();
        }
        words.push(w);
        if rng.gen_bool(0.2) {
            words.push(MINI_STOP_WORDS.choose(rng).unwrap().to_string());
        }
    }
    let sep = [" ", ", ", "-", " / "];
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push_str(sep.choose(rng).unwrap());
        }
        out.push_str(w);
    }
    out
}

/// Lowercased alphanumeric runs minus the generator's stop words.
fn mini_tokens(text: &str) -> Vec<String> {
    text.to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty() && !MINI_STOP_WORDS.contains(t))
        .map(str::to_string)
        .collect()
}

fn mini_kb(rng: &mut ChaCha8Rng) -> KnowledgeBase {
    let n = rng.gen_range(1..=BRUTE_FORCE_MAX_CLASSES);
    let mut nodes = Vec::new();
    let mut entries = Vec::new();
    let mut glossary = Vec::new();
    for i in 0..n {
        let (section, code) = if rng.gen_bool(0.85) {
            (Section::Diagnoses, format!("D{i:04}"))
        } else {
            (Section::Procedures, format!("P{i:04}"))
        };
        let mut node = ClassNode::new(section, Level::Chapter, &code, None, &mini_text(rng));
        let extra = rng.gen_range(0..BRUTE_FORCE_MAX_ATTRIBUTES);
        for _ in 0..extra {
            match rng.gen_range(0..7) {
                0 => node.additional_title_terms.push(mini_text(rng)),
                1 => node.inclusions.push(mini_text(rng)),
                2 => node.exclusions.push(Exclusion::parse(&mini_text(rng))),
                3 => node.notes.push(Note::parse(NoteKind::Other, &mini_text(rng))),
                4 => entries.push(EntryTerm {
                    text: mini_text(rng),
                    target_code: code.clone(),
                    indentation: rng.gen_range(0..=6),
                    source: EntrySource::AlphabeticalIndex,
                }),
                5 => entries.push(EntryTerm {
                    text: mini_text(rng),
                    target_code: code.clone(),
                    indentation: rng.gen_range(0..=2),
                    source: EntrySource::NeoplasmTable,
                }),
                _ => glossary.push(GlossaryTerm {
                    text: mini_text(rng),
                    target_code: code.clone(),
                    glossary: *GlossaryKind::ALL.choose(rng).unwrap(),
                    mapping_quality: MappingQuality::Exact,
                }),
            }
        }
        nodes.push(node);
    }
    entries.shuffle(rng);
    glossary.shuffle(rng);
    KnowledgeBase::new(nodes, entries, glossary)
}

fn brute_force_search_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut compared = 0;
    let mut nonempty = 0;
    for k in 0..BRUTE_FORCE_KBS {
        let kb = mini_kb(&mut rng);
        let index = SearchIndex::build(&kb, AttributeWeightTable::default());
        let oracles = [
            oracle_attributes(&kb, Section::Diagnoses),
            oracle_attributes(&kb, Section::Procedures),
        ];
        for _ in 0..BRUTE_FORCE_QUERIES {
            let section = if rng.gen_bool(0.8) { Section::Diagnoses } else { Section::Procedures };
            let n = rng.gen_range(1..=3);
            let mut words: Vec<String> = (0..n).map(|_| MINI_VOCABULARY.choose(&mut rng).unwrap().to_string()).collect();
            if rng.gen_bool(0.05) {
                words.push("assente".into());
            }
            let text = words.iter().map(|w| if rng.gen_bool(0.3) { w.to_uppercase() } else { w.clone() }).collect::<Vec<_>>().join(" ");
            let query = Query::new(&text, section, 1);
            let mut terms = words.clone();
            terms.dedup();
            let oracle = oracle_search(&oracles[section.slot_index()], &words, mini_tokens);
            let got = index_search(&index, section, &query.terms);
            if got != oracle {
                return Err(format!("kb {k}, query {text:?}: index {got:?} vs oracle {oracle:?}"));
            }
            compared += 1;
            nonempty += usize::from(!got.is_empty());
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < BRUTE_FORCE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{compared} queries over {BRUTE_FORCE_KBS} KBs, {nonempty} non-empty, 0 mismatches"))
}

trait SlotIndex {
    fn slot_index(self) -> usize;
}

impl SlotIndex for Section {
    fn slot_index(self) -> usize {
        match self {
            Section::Diagnoses => 0,
            Section::Procedures => 1,
        }
    }
}

// ---------------------------------------------------------------------------

/// Distinct tokens of every indexed text of `section`.
fn fixture_vocabulary(kb: &KnowledgeBase, section: Section) -> Vec<String> {
    let set: BTreeSet<String> = oracle_attributes(kb, section)
        .values()
        .flatten()
        .flat_map(|(_, text)| tokenize(text))
        .collect();
    set.into_iter().collect()
}

fn monotone_filtering() -> Outcome {
    let b = bundle();
    let index = SearchIndex::build(&b.kb, AttributeWeightTable::default());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let vocab = [
        fixture_vocabulary(&b.kb, Section::Diagnoses),
        fixture_vocabulary(&b.kb, Section::Procedures),
    ];
    let mut shrunk = 0;
    for i in 0..MONOTONE_PAIRS {
        let section = if rng.gen_bool(0.75) { Section::Diagnoses } else { Section::Procedures };
        let words = &vocab[section.slot_index()];
        let n = rng.gen_range(1..=2);
        let terms: Vec<String> = (0..n).map(|_| words.choose(&mut rng).unwrap().clone()).collect();
        let base: BTreeSet<String> = index_search(&index, section, &terms).into_iter().map(|r| r.0).collect();
        let mut extended = terms.clone();
        extended.push(words.choose(&mut rng).unwrap().clone());
        let narrower: BTreeSet<String> = index_search(&index, section, &extended).into_iter().map(|r| r.0).collect();
        ensure(narrower.is_subset(&base), || format!("pair {i}: {extended:?} adds {:?}", narrower.difference(&base)))?;
        shrunk += usize::from(narrower.len() < base.len());
    }
    Ok(format!("{MONOTONE_PAIRS} pairs, {shrunk} strictly narrower, 0 violations"))
}

fn related_term_oracle() -> Outcome {
    let b = bundle();
    let index = SearchIndex::build(&b.kb, AttributeWeightTable::default());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let attrs = [
        oracle_attributes(&b.kb, Section::Diagnoses),
        oracle_attributes(&b.kb, Section::Procedures),
    ];
    let vocab = [
        fixture_vocabulary(&b.kb, Section::Diagnoses),
        fixture_vocabulary(&b.kb, Section::Procedures),
    ];
    let feeds = ["title", "additional_title", "inclusion", "alphabetical_main", "alphabetical_sub"];
    let mut with_terms = 0;
    for i in 0..RELATED_QUERIES {
        let section = if rng.gen_bool(0.75) { Section::Diagnoses } else { Section::Procedures };
        let n = rng.gen_range(1..=2);
        let terms: Vec<String> = (0..n).map(|_| vocab[section.slot_index()].choose(&mut rng).unwrap().clone()).collect();
        let query = Query::from_terms(terms.clone(), section, 10);

        let hits = oracle_search(&attrs[section.slot_index()], &query.terms, tokenize);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for (code, _) in &hits {
            for (label, text) in &attrs[section.slot_index()][code] {
                if !feeds.contains(&label.as_str()) {
                    continue;
                }
                for tok in tokenize(text) {
                    if !query.terms.contains(&tok) {
                        *counts.entry(tok).or_default() += 1;
                    }
                }
            }
        }
        let mut expected: Vec<(String, usize)> = counts.into_iter().collect();
        expected.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let results = index.search_all(section, &query.terms).map_err(|e| e.to_string())?;
        let got: Vec<(String, usize)> = index
            .related_terms(&query, &results)
            .into_iter()
            .map(|t| (t.token, t.occurrence_count))
            .collect();
        ensure(got == expected, || format!("query {i} {terms:?}: {got:?} vs recount {expected:?}"))?;
        with_terms += usize::from(!got.is_empty());
    }
    Ok(format!("{RELATED_QUERIES} queries, {with_terms} with related terms, exact"))
}

fn weight_table_conformance() -> Outcome {
    let b = bundle();
    let index = SearchIndex::build(&b.kb, AttributeWeightTable::default());
    let cases = [("pigmento", 10_000u64, "title"), ("transitorio", 100, "alphabetical_sub"), ("zuccheri", 0, "glossary_other")];
    let attrs = oracle_attributes(&b.kb, Section::Diagnoses);
    let mut report = Vec::new();
    for (token, milli, label) in cases {
        let results = index.search_all(Section::Diagnoses, &[token.to_string()]).map_err(|e| e.to_string())?;
        ensure(results.len() == 1, || format!("{token}: {} classes match", results.len()))?;
        let r = &results[0];
        // the fixture has exactly one attribute of that kind carrying the token
        let carriers: Vec<&String> = attrs[&r.code]
            .iter()
            .filter(|(_, text)| tokenize(text).iter().any(|t| t == token))
            .map(|(l, _)| l)
            .collect();
        ensure(carriers == [label], || format!("{token} is carried by {carriers:?}"))?;
        ensure(r.score.milli() == milli, || format!("{token} scores {}", r.score))?;
        report.push(format!("{token}={}", r.score));
    }
    Ok(report.join(", "))
}

// ---------------------------------------------------------------------------

fn tree_validation() -> Outcome {
    let b = bundle();
    let defects = validate_tree(&b.tree, KNOWN_PREDICATES);
    ensure(defects.is_empty(), || format!("shipped tree: {defects:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let (root, nodes) = b.tree.clone().into_nodes();
    let ids: Vec<u32> = nodes.iter().map(|n| n.id).collect();
    let mut tally = [0usize; 3];
    for m in 0..TREE_MUTANTS {
        let mut mutant = nodes.clone();
        let kind = m % 3;
        let what = match kind {
            0 => {
                // send one arc somewhere else
                let with_arcs: Vec<usize> = (0..mutant.len()).filter(|&i| !mutant[i].kind.arcs().is_empty()).collect();
                let i = *with_arcs.choose(&mut rng).unwrap();
                let id = mutant[i].id;
                let mut arcs = mutant[i].kind.arcs_mut();
                let k = rng.gen_range(0..arcs.len());
                let old = *arcs[k];
                let new = *ids.iter().filter(|&&t| t != old).collect::<Vec<_>>().choose(&mut rng).unwrap();
                *arcs[k] = *new;
                format!("arc {id}->{old} retargeted to {new}")
            }
            1 => {
                let i = rng.gen_range(0..mutant.len());
                let gone = mutant.remove(i);
                format!("node {} deleted", gone.id)
            }
            _ => {
                let preds: Vec<usize> = (0..mutant.len())
                    .filter(|&i| matches!(mutant[i].kind, NodeKind::Predicate { .. }))
                    .collect();
                let i = *preds.choose(&mut rng).unwrap();
                let NodeKind::Predicate { predicate, .. } = &mut mutant[i].kind else { unreachable!() };
                let mut chars: Vec<char> = predicate.name.chars().collect();
                match rng.gen_range(0..3) {
                    0 => {
                        let p = rng.gen_range(0..chars.len());
                        chars.remove(p);
                    }
                    1 => {
                        let p = rng.gen_range(0..chars.len());
                        chars.insert(p, 'x');
                    }
                    _ => {
                        let p = rng.gen_range(0..chars.len() - 1);
                        if chars[p] == chars[p + 1] {
                            chars[p] = 'q';
                        } else {
                            chars.swap(p, p + 1);
                        }
                    }
                }
                let typo: String = chars.into_iter().collect();
                let msg = format!("{} became {typo}", predicate.name);
                predicate.name = typo;
                msg
            }
        };
        let tree = DecisionTree::new(root, mutant).map_err(|e| e.to_string())?;
        let found = validate_tree(&tree, KNOWN_PREDICATES);
        ensure(!found.is_empty(), || format!("mutant {m} ({what}) passes validation"))?;
        tally[kind] += 1;
    }
    Ok(format!(
        "shipped tree clean; {} retargeted, {} deleted, {} typo mutants all rejected",
        tally[0], tally[1], tally[2]
    ))
}

struct Played {
    pc: Vec<String>,
    pi: Vec<String>,
    answers: Vec<Vec<String>>,
    interactions: Vec<Interaction>,
    path: Vec<u32>,
    verdict: Vec<String>,
}

fn random_answer(rng: &mut ChaCha8Rng, interaction: &Interaction) -> Vec<String> {
    let allowed = interaction.allowed_answers.clone().unwrap_or_default();
    match interaction.kind {
        InteractionType::AskBinary => vec![if rng.gen_bool(0.5) { ANSWER_YES } else { ANSWER_NO }.to_string()],
        InteractionType::AskSingleCode => vec![allowed.choose(rng).unwrap().clone()],
        InteractionType::AskMulticode => {
            let n = rng.gen_range(1..=allowed.len());
            allowed.choose_multiple(rng, n).cloned().collect()
        }
        InteractionType::Result => Vec::new(),
    }
}

fn play(engine: &DecisionEngine<'_>, rng: &mut ChaCha8Rng, pc: Vec<String>, pi: Vec<String>) -> Result<Played, String> {
    let (mut state, mut interaction) = engine.start_session("s", &pc, &pi).map_err(|e| format!("{pc:?}/{pi:?}: {e}"))?;
    let mut answers = Vec::new();
    let mut interactions = vec![interaction.clone()];
    while state.status == SessionStatus::AwaitingAnswer {
        if answers.len() > engine.tree().len() {
            return Err(format!("{pc:?}/{pi:?}: no verdict after {} answers", answers.len()));
        }
        let answer = random_answer(rng, &interaction);
        interaction = engine
            .answer(&mut state, interaction.state, &answer)
            .map_err(|e| format!("{pc:?}/{pi:?} answering {answer:?}: {e}"))?;
        answers.push(answer);
        interactions.push(interaction.clone());
    }
    Ok(Played {
        pc,
        pi,
        answers,
        interactions,
        path: state.path,
        verdict: state.verdict.unwrap_or_default(),
    })
}

fn random_case(rng: &mut ChaCha8Rng, b: &Bundle) -> (Vec<String>, Vec<String>) {
    let leaves: Vec<&str> = b
        .kb
        .nodes_in(Section::Diagnoses)
        .filter(|n| b.kb.is_leaf(Section::Diagnoses, &n.code).unwrap_or(false))
        .map(|n| n.code.as_str())
        .collect();
    let procedures: Vec<&str> = b.procedure_sets.entries().into_iter().map(|(c, _)| c).collect();
    let n = rng.gen_range(1..=4);
    let pc = leaves.choose_multiple(rng, n).map(|c| c.to_string()).collect();
    let m = rng.gen_range(0..=3);
    let pi = procedures.choose_multiple(rng, m).map(|c| c.to_string()).collect();
    (pc, pi)
}

fn replay(engine: &DecisionEngine<'_>, pc: &[String], pi: &[String], answers: &[Vec<String>]) -> Result<(Vec<Interaction>, Vec<u32>), String> {
    let (transcript, state) = run_scripted(engine, "s", pc, pi, answers).map_err(|e| e.to_string())?;
    Ok((transcript.steps.into_iter().map(|s| s.interaction).collect(), state.path))
}

fn engine_determinism() -> Outcome {
    let b = bundle();
    let engine = DecisionEngine::new(&b.tree, &b.procedure_sets, &b.kb);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let mut leaves_hit = BTreeSet::new();
    let mut longest = 0;
    for i in 0..ENGINE_SESSIONS {
        let (pc, pi) = random_case(&mut rng, &b);
        let played = play(&engine, &mut rng, pc, pi).map_err(|e| format!("session {i}: {e}"))?;
        ensure(played.path.len() <= b.tree.len(), || format!("session {i}: path {:?}", played.path))?;
        ensure(!played.verdict.is_empty() && played.verdict.iter().all(|c| played.pc.contains(c)), || {
            format!("session {i}: verdict {:?} for pc {:?}", played.verdict, played.pc)
        })?;
        let (again, path) = replay(&engine, &played.pc, &played.pi, &played.answers).map_err(|e| format!("session {i} replay: {e}"))?;
        ensure(again == played.interactions && path == played.path, || format!("session {i}: replay diverged"))?;
        leaves_hit.insert(*played.path.last().unwrap());
        longest = longest.max(played.path.len());
    }
    Ok(format!(
        "{ENGINE_SESSIONS} sessions finished and replayed identically; {} distinct leaves, longest path {longest} of {} nodes",
        leaves_hit.len(),
        b.tree.len()
    ))
}

fn residual_invariance() -> Outcome {
    let b = bundle();
    let engine = DecisionEngine::new(&b.tree, &b.procedure_sets, &b.kb);
    let residual: Vec<String> = b
        .procedure_sets
        .entries()
        .into_iter()
        .filter(|(_, k)| *k == ProcedureClass::ResidualNonRelevant)
        .map(|(c, _)| c.to_string())
        .collect();
    ensure(!residual.is_empty(), || "no residual procedures in the fixture".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0009);
    let mut changed_pi = 0;
    for i in 0..RESIDUAL_SESSIONS {
        let (pc, pi) = random_case(&mut rng, &b);
        let played = play(&engine, &mut rng, pc, pi).map_err(|e| format!("session {i}: {e}"))?;
        let mut other: Vec<String> = played.pi.iter().filter(|p| !residual.contains(p)).cloned().collect();
        let k = rng.gen_range(0..=residual.len());
        other.extend(residual.choose_multiple(&mut rng, k).cloned());
        other.shuffle(&mut rng);
        changed_pi += usize::from(other.iter().collect::<BTreeSet<_>>() != played.pi.iter().collect::<BTreeSet<_>>());
        let (interactions, path) =
            replay(&engine, &played.pc, &other, &played.answers).map_err(|e| format!("session {i} with pi {other:?}: {e}"))?;
        ensure(interactions == played.interactions && path == played.path, || {
            format!("session {i}: pi {:?} -> {other:?} changed the path {:?} -> {path:?}", played.pi, played.path)
        })?;
    }
    Ok(format!("{RESIDUAL_SESSIONS} sessions, {changed_pi} with a different residual set, all paths identical"))
}

// ---------------------------------------------------------------------------

fn conflict(kb: &KnowledgeBase, section: Section, code: &str, other: &str) -> bool {
    validate_selection(kb, section, code, &[other.to_string()])
        .map(|alerts| alerts.iter().any(|a| a.kind == AlertKind::ExclusionConflict))
        .unwrap_or(false)
}

/// Self and ancestors by following `parent_code` in the raw records.
fn lineage<'a>(by_code: &HashMap<&str, &'a ClassNode>, code: &str) -> Vec<&'a ClassNode> {
    let mut out = Vec::new();
    let mut cur = by_code.get(code).copied();
    while let Some(node) = cur {
        out.push(node);
        cur = node.parent_code.as_deref().and_then(|p| by_code.get(p).copied());
    }
    out
}

fn coding_rule_alerts() -> Outcome {
    let b = bundle();
    let kb = &b.kb;
    let d = Section::Diagnoses;
    let alerts = validate_selection(kb, d, "250", &[]).map_err(|e| e.to_string())?;
    ensure(alerts.iter().any(|a| a.kind == AlertKind::NotLeaf), || format!("250: {alerts:?}"))?;
    let alerts = validate_selection(kb, d, "648.00", &[]).map_err(|e| e.to_string())?;
    ensure(
        !alerts.iter().any(|a| matches!(a.kind, AlertKind::NotLeaf | AlertKind::ExclusionConflict)),
        || format!("648.00: {alerts:?}"),
    )?;

    let mut excluding_pairs = 0;
    let mut checked = 0;
    for section in [Section::Diagnoses, Section::Procedures] {
        let nodes: Vec<&ClassNode> = kb.nodes_in(section).collect();
        let by_code: HashMap<&str, &ClassNode> = nodes.iter().map(|n| (n.code.as_str(), *n)).collect();
        let refs = |code: &str| -> BTreeSet<String> {
            lineage(&by_code, code)
                .iter()
                .flat_map(|n| n.exclusions.iter().flat_map(|e| e.referenced_codes.iter().cloned()))
                .collect()
        };
        let covers = |refs: &BTreeSet<String>, code: &str| lineage(&by_code, code).iter().any(|n| refs.contains(&n.code));
        let all_refs: HashMap<&str, BTreeSet<String>> = nodes.iter().map(|n| (n.code.as_str(), refs(&n.code))).collect();
        for a in &nodes {
            for c in &nodes {
                if a.code == c.code {
                    continue;
                }
                let expected = covers(&all_refs[a.code.as_str()], &c.code) || covers(&all_refs[c.code.as_str()], &a.code);
                let ab = conflict(kb, section, &a.code, &c.code);
                let ba = conflict(kb, section, &c.code, &a.code);
                ensure(ab == ba, || format!("{} vs {}: {ab} one way, {ba} the other", a.code, c.code))?;
                ensure(ab == expected, || format!("{} vs {}: alert {ab}, exclusion data says {expected}", a.code, c.code))?;
                excluding_pairs += usize::from(expected);
                checked += 1;
            }
        }
    }
    ensure(excluding_pairs > 0, || "fixture has no exclusion pair".into())?;
    Ok(format!("250 NotLeaf, 648.00 clean, {checked} ordered pairs checked, {excluding_pairs} in conflict, symmetric"))
}

// ---------------------------------------------------------------------------

fn ingestion_integrity() -> Outcome {
    let manifest = Manifest::parse(BUILTIN_MANIFEST, "manifest.txt").map_err(|e| e.to_string())?;
    let b = load_bundle(&manifest, &builtin_opener()).map_err(|e| e.to_string())?;
    for entry in &manifest.entries {
        let Some(declared) = entry.declared_count else { continue };
        let name = entry.kind.name();
        let actual = match name.as_str() {
            "procedure_sets" => b.procedure_sets.len(),
            "decision_tree" => b.tree.len(),
            other => b.kb.provenance().get(other),
        };
        ensure(actual == declared, || format!("{}: declared {declared}, loaded {actual}", entry.path))?;
    }
    let issues = b.kb.validate_hierarchy();
    ensure(issues.is_empty(), || format!("clean fixture reports {issues:?}"))?;

    let edit = |path: &str, f: &dyn Fn(&str) -> String| {
        let mut opener = builtin_opener();
        let text = opener.files[path].clone();
        opener.files.insert(path.to_string(), f(&text));
        opener
    };
    let orphan = edit("systematic.tsv", &|t| t.replacen("\t250\tsubcategory", "\t251\tsubcategory", 1));
    match load_kb(&manifest, &orphan) {
        Err(IngestError::InconsistentHierarchy(v)) if v.iter().any(|i| matches!(i, HierarchyIssue::OrphanParent { .. })) => {}
        other => return Err(format!("orphan parent not detected: {other:?}")),
    }
    let dup_manifest =
        Manifest::parse(&BUILTIN_MANIFEST.replace("systematic\t106", "systematic\t107"), "m").map_err(|e| e.to_string())?;
    let duplicate = edit("systematic.tsv", &|t| {
        let row = t.lines().find(|l| l.starts_with("250.1\t")).unwrap();
        format!("{t}{row}\n")
    });
    match load_kb(&dup_manifest, &duplicate) {
        Err(IngestError::InconsistentHierarchy(v)) if v.iter().any(|i| matches!(i, HierarchyIssue::DuplicateCode { .. })) => {}
        other => return Err(format!("duplicate code not detected: {other:?}")),
    }
    let miscount = Manifest::parse(&BUILTIN_MANIFEST.replace("neoplasm\t2", "neoplasm\t3"), "m").map_err(|e| e.to_string())?;
    match load_kb(&miscount, &builtin_opener()) {
        Err(IngestError::CountMismatch { declared: 3, actual: 2, .. }) => {}
        other => return Err(format!("count mismatch not detected: {other:?}")),
    }
    Ok(format!(
        "{} sources at declared counts, hierarchy clean, orphan/duplicate/miscount faults detected",
        manifest.entries.len()
    ))
}

// ---------------------------------------------------------------------------

const SYLLABLES: [&str; 20] = [
    "ca", "re", "no", "pa", "ti", "lo", "me", "si", "ro", "ga", "ne", "fi", "to", "la", "mi", "co", "ra", "te", "po", "di",
];

fn synthetic_word(i: usize) -> String {
    let mut w = String::new();
    let mut n = i + SYLLABLES.len();
    while n > 0 {
        w.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
    }
    w.push('x');
    w
}

/// Skewed pick: low indices are much more frequent.
fn skewed(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let u: f64 = rng.gen();
    ((u * u * u) * n as f64) as usize
}

fn synthetic_phrase(rng: &mut ChaCha8Rng, vocab: &[String]) -> String {
    let n = rng.gen_range(2..=6);
    (0..n).map(|_| vocab[skewed(rng, vocab.len())].as_str()).collect::<Vec<_>>().join(" ")
}

fn scale_smoke_test() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0012);
    let vocab: Vec<String> = (0..20_000).map(synthetic_word).collect();
    let classes = 100_000;
    let mut nodes = Vec::with_capacity(classes + 20);
    for c in 0..20 {
        nodes.push(ClassNode::new(Section::Diagnoses, Level::Chapter, &format!("C{c:02}"), None, &synthetic_phrase(&mut rng, &vocab)));
    }
    let mut codes = Vec::with_capacity(classes);
    for i in 0..classes {
        let code = format!("C{:02}.{i:06}", i % 20);
        let parent = format!("C{:02}", i % 20);
        let mut node = ClassNode::new(Section::Diagnoses, Level::Category, &code, Some(&parent), &synthetic_phrase(&mut rng, &vocab));
        if rng.gen_bool(0.5) {
            node.additional_title_terms.push(synthetic_phrase(&mut rng, &vocab));
        }
        if rng.gen_bool(0.3) {
            node.inclusions.push(synthetic_phrase(&mut rng, &vocab));
        }
        nodes.push(node);
        codes.push(code);
    }
    let entries: Vec<EntryTerm> = (0..150_000)
        .map(|_| EntryTerm {
            text: synthetic_phrase(&mut rng, &vocab),
            target_code: codes[rng.gen_range(0..codes.len())].clone(),
            indentation: rng.gen_range(0..=3),
            source: EntrySource::AlphabeticalIndex,
        })
        .collect();
    let glossary: Vec<GlossaryTerm> = (0..60_000)
        .map(|_| GlossaryTerm {
            text: synthetic_phrase(&mut rng, &vocab),
            target_code: codes[rng.gen_range(0..codes.len())].clone(),
            glossary: *GlossaryKind::ALL.choose(&mut rng).unwrap(),
            mapping_quality: MappingQuality::Approximate,
        })
        .collect();
    let kb = KnowledgeBase::new(nodes, entries, glossary);
    let terms = kb.total_terms();
    ensure(terms >= SCALE_MIN_TERMS, || format!("only {terms} terms"))?;

    let build_started = Instant::now();
    let index = SearchIndex::build(&kb, AttributeWeightTable::default());
    let build = build_started.elapsed();

    let mut worst = Duration::ZERO;
    let mut worst_query = String::new();
    for q in 0..SCALE_QUERIES {
        // the first few are the most frequent words, the worst case
        let text = if q < 4 {
            vocab[q].clone()
        } else {
            let n = rng.gen_range(1..=2);
            (0..n).map(|_| vocab[skewed(&mut rng, 2_000)].clone()).collect::<Vec<_>>().join(" ")
        };
        let started = Instant::now();
        let body = search_body(&index, Section::Diagnoses, &text, 50).map_err(|e| e.to_string())?;
        let took = started.elapsed();
        std::hint::black_box(&body);
        if took > worst {
            worst = took;
            worst_query = format!("{text} ({} results)", body.results.len());
        }
    }
    ensure(worst < SCALE_QUERY_BUDGET, || format!("slowest query {worst_query} took {worst:?}"))?;
    Ok(format!(
        "{terms} terms indexed in {build:?}; slowest of {SCALE_QUERIES} searches {worst:?} ({worst_query})"
    ))
}
