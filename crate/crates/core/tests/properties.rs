mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use proptest::prelude::*;
use regex::Regex;

use l1drift::corpus::{build_eval_cells, sample_training, write_rows};
use l1drift::ingest::{read_dump, write_dump, DumpFormat};
use l1drift::labeling::origin::parse_origin_response;
use l1drift::labeling::{key_positions, label_paper, LabelConfig, LabelOutcome, MappingTable};
use l1drift::par::Execution;
use l1drift::prompts::{build_fewshot_prompt, build_finetune_example, parse_label, Exemplar, Prediction};
use l1drift::stats::{confusion_matrix, era_report, metrics, ConfusionMatrix, PredictionRecord, PRED_COLUMNS};
use l1drift::{CountryCode, Era, L1Label, PaperRecord, SamplingConfig};

use common::{cc, fixtures, CountingClient};

const CODES: [&str; 10] = ["US", "GB", "FR", "DE", "IT", "CN", "JP", "KR", "CH", "IN"];

fn code() -> impl Strategy<Value = CountryCode> {
    prop::sample::select(CODES.to_vec()).prop_map(cc)
}

fn label() -> impl Strategy<Value = L1Label> {
    prop::sample::select(L1Label::ALL.to_vec())
}

fn era() -> impl Strategy<Value = Era> {
    prop::sample::select(Era::ALL.to_vec())
}

fn words() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 ,.:;'\"{}()-]{0,40}"
}

fn paper() -> impl Strategy<Value = PaperRecord> {
    (
        "[A-Za-z0-9.:/-]{1,16}",
        words(),
        words(),
        1950i32..=2100,
        "[A-Za-z][A-Za-z ]{0,11}",
        prop::collection::vec(("[A-Z][a-z]{1,8} [A-Z][a-z]{1,10}", prop::collection::btree_set(code(), 0..3)), 1..8),
    )
        .prop_filter_map("blank text", |(id, title, abs, year, venue, authors)| {
            PaperRecord::new(id, &title, &abs, year, venue, authors).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dump_round_trips(papers in prop::collection::vec(paper(), 0..12)) {
        let mut out = Vec::new();
        write_dump(&mut out, &papers).unwrap();
        for format in [DumpFormat::Arxiv, DumpFormat::Anthology] {
            let load = read_dump(out.as_slice(), format).unwrap();
            prop_assert!(load.violations.is_empty());
            prop_assert_eq!(&load.records, &papers);
        }
        let mut again = Vec::new();
        write_dump(&mut again, &read_dump(out.as_slice(), DumpFormat::Arxiv).unwrap().records).unwrap();
        prop_assert_eq!(again, out);
    }

    #[test]
    fn removing_a_non_key_author_keeps_the_label(
        country in prop::sample::select(CODES[..8].to_vec()).prop_map(cc),
        second in code(),
        mut authors in prop::collection::vec((prop::collection::btree_set(code(), 0..3), [code(), code()]), 4..=5),
        drop_seed in any::<prop::sample::Index>(),
    ) {
        // Key authors agree on a mapped country; the rest are arbitrary.
        let n = authors.len();
        for k in key_positions(n) {
            authors[k] = ([country].into_iter().collect(), [country, second]);
        }
        let cfg = LabelConfig::default();
        let run = |authors: &[(BTreeSet<CountryCode>, [CountryCode; 2])]| {
            let list = authors.iter().enumerate().map(|(i, (c, _))| (format!("Author {i}"), c.clone())).collect();
            let paper = PaperRecord::new("P", "Title", "Abstract.", 2012, "", list).unwrap();
            // Responses follow the author, not the position.
            let responses = authors
                .iter()
                .enumerate()
                .map(|(i, (_, [a, b]))| (format!("Author {i}"), format!("[\"{a}\", \"{b}\"]")))
                .collect();
            label_paper(&paper, &CountingClient::new(responses), &cfg).unwrap()
        };
        let before = run(&authors);
        prop_assert!(matches!(before, LabelOutcome::Labeled(_)));

        let keys = key_positions(authors.len());
        let non_key: Vec<usize> = (0..authors.len()).filter(|i| !keys.contains(i)).collect();
        let drop = non_key[drop_seed.index(non_key.len())];
        // Renaming keeps each surviving author's name bound to its own response.
        let fewer: Vec<_> = authors.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, a)| a.clone()).collect();
        let after = run(&fewer);
        prop_assert_eq!(before.label(), after.label());
    }

    #[test]
    fn mapping_tables_are_injective_or_rejected(rows in prop::collection::vec((code(), label()), 0..16)) {
        if let Ok(table) = MappingTable::from_entries(rows) {
            let mut seen = BTreeMap::new();
            for (country, label) in table.entries() {
                prop_assert!(seen.insert(label, country).is_none(), "{label} mapped twice");
            }
            prop_assert_eq!(seen.len(), 8);
        }
    }

    #[test]
    fn parse_label_accepts_decorated_labels(l in label(), upper in any::<bool>(), pad in "[ \t\n]{0,3}", punct in "[.!:\"']{0,2}") {
        let shown = l.as_str().replace('_', " ");
        let shown = if upper { shown.to_uppercase() } else { shown };
        let raw = format!("{pad}{shown}{punct}{pad}");
        let parsed = parse_label(&raw);
        prop_assert_eq!(parsed.value, Prediction::Label(l));
        prop_assert_eq!(parsed.raw, raw);
    }

    #[test]
    fn parse_label_never_invents_labels(raw in ".{0,30}") {
        let parsed = parse_label(&raw);
        if let Prediction::Label(l) = parsed.value {
            let squashed: String = raw.to_lowercase().chars().filter(|c| c.is_alphanumeric()).collect();
            prop_assert_eq!(squashed, l.as_str().replace('_', ""));
        }
    }

    #[test]
    fn prompts_ignore_whitespace_layout(title in words(), abs in words(), l in label(), crlf in any::<bool>()) {
        prop_assume!(!title.trim().is_empty() && !abs.trim().is_empty());
        let ex = vec![Exemplar { title: "Ex title".into(), abstract_text: "Ex abstract.".into(), label: l }];
        let a = build_fewshot_prompt(&title, &abs, &ex).unwrap();
        let sep = if crlf { "\r\n" } else { "\n" };
        let messy_title = format!("  {}{sep}", title.replace(' ', "   "));
        let messy_abs = format!("{sep}{}\t", abs.replace(' ', sep));
        let b = build_fewshot_prompt(&messy_title, &messy_abs, &ex).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(!a.user.contains('\r'));
        let (fa, ca) = build_finetune_example(&title, &abs, l).unwrap();
        let (fb, cb) = build_finetune_example(&messy_title, &messy_abs, l).unwrap();
        prop_assert_eq!(fa, fb);
        prop_assert_eq!(&ca, &cb);
        prop_assert_eq!(ca.as_str(), l.as_str());
    }

    #[test]
    fn metrics_stay_in_bounds(cells in prop::collection::vec(0u64..30, 8 * PRED_COLUMNS)) {
        let mut counts = [[0u64; PRED_COLUMNS]; 8];
        for (i, c) in cells.into_iter().enumerate() {
            counts[i / PRED_COLUMNS][i % PRED_COLUMNS] = c;
        }
        let cm = ConfusionMatrix::from_counts(counts);
        let m = metrics(&cm);
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        prop_assert!(unit(m.accuracy) && unit(m.macro_f1));
        for l in L1Label::ALL {
            let c = m.per_class[&l];
            prop_assert!(unit(c.precision) && unit(c.recall) && unit(c.f1));
            prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-12);
            prop_assert!(c.f1 >= c.precision.min(c.recall) - 1e-12 || c.f1 == 0.0);
            if cm.diag(l) == 0 {
                prop_assert_eq!(c.f1, 0.0);
            }
            prop_assert_eq!(c.support, cm.row_sum(l));
        }
    }

    #[test]
    fn report_modes_agree(rows in prop::collection::vec((era(), label(), prop::option::of(label())), 1..300)) {
        let preds: Vec<PredictionRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (era, gold, pred))| PredictionRecord {
                paper_id: format!("p{i}"),
                era: *era,
                gold: *gold,
                predicted: parse_label(pred.map_or("no idea", |p| p.as_str())),
            })
            .collect();
        let seq = era_report(&preds, 0.05, Execution::Sequential);
        let par = era_report(&preds, 0.05, Execution::Parallel);
        // Two eras that are both all right or all wrong have no p-value; both modes
        // must then fail the same way.
        let (seq, par) = match (seq, par) {
            (Ok(s), Ok(p)) => (s, p),
            (s, p) => {
                prop_assert_eq!(format!("{:?}", s.err()), format!("{:?}", p.err()));
                return Ok(());
            }
        };
        prop_assert_eq!(seq.to_json(), par.to_json());
        let total: u64 = seq.counts.values().map(|c| c.total).sum();
        prop_assert_eq!(total, preds.len() as u64);
        let invalid = rows.iter().filter(|r| r.2.is_none()).count() as u64;
        let correct: u64 = seq.counts.values().map(|c| c.correct).sum();
        prop_assert!(correct <= total - invalid);
        for era in Era::ALL {
            let rows: Vec<_> = preds.iter().filter(|p| p.era == era).cloned().collect();
            if !rows.is_empty() {
                prop_assert_eq!(confusion_matrix(&rows).unwrap().total, seq.counts[&era].total);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn corpora_depend_only_on_pool_and_seed(seed in any::<u64>(), shuffle in any::<u64>()) {
        let cfg = SamplingConfig { rng_seed: seed, ..SamplingConfig::default() };
        let serialize = |pool: &[l1drift::corpus::PoolPaper]| {
            let (eval, em) = build_eval_cells(pool, &cfg).unwrap();
            let mut out = Vec::new();
            write_rows(&mut out, &eval).unwrap();
            out.extend(serde_json::to_vec(&em).unwrap());
            out
        };
        let train = |pool: &[l1drift::corpus::PoolPaper]| {
            let (rows, m) = sample_training(pool, &cfg).unwrap();
            let mut out = Vec::new();
            write_rows(&mut out, &rows).unwrap();
            out.extend(serde_json::to_vec(&m).unwrap());
            out
        };
        let eval_pool = common::eval_pool();
        let train_pool = common::train_pool();
        // Input order must not matter: rotate the pools.
        let k = (shuffle as usize) % eval_pool.len();
        let mut rotated = eval_pool.clone();
        rotated.rotate_left(k);
        prop_assert_eq!(serialize(&eval_pool), serialize(&rotated));
        let k = (shuffle as usize) % train_pool.len();
        let mut rotated = train_pool.clone();
        rotated.rotate_left(k);
        rotated.reverse();
        prop_assert_eq!(train(&train_pool), train(&rotated));
    }
}

/// Independent reading of the origin response format: the first bracketed list whose
/// items are all quoted, where every item must be a two-letter code and there must be
/// exactly two.
fn origin_oracle(raw: &str) -> Option<[String; 2]> {
    let list = Regex::new(r"\[([^\[\]]*)\]").unwrap();
    let item = Regex::new(r#"^\s*["'“”‘’](.*)["'“”‘’]\s*$"#).unwrap();
    let two_letters = Regex::new(r"^[A-Za-z]{2}$").unwrap();
    for cap in list.captures_iter(raw) {
        let body = &cap[1];
        let items: Vec<&str> = if body.trim().is_empty() { Vec::new() } else { body.split(',').collect() };
        let quoted: Option<Vec<String>> =
            items.iter().map(|s| item.captures(s).map(|c| c[1].trim().to_string())).collect();
        let Some(quoted) = quoted else { continue };
        if !quoted.iter().all(|q| two_letters.is_match(q)) {
            continue;
        }
        let codes: Vec<String> = quoted
            .iter()
            .map(|q| match q.to_uppercase().as_str() {
                "UK" => "GB".to_string(),
                other => other.to_string(),
            })
            .collect();
        return match codes.as_slice() {
            [a, b] => Some([a.clone(), b.clone()]),
            _ => None,
        };
    }
    None
}

#[derive(serde::Deserialize)]
struct OriginCase {
    raw: String,
    expected: Option<[String; 2]>,
}

#[test]
fn origin_responses_match_fixture_and_oracle() {
    let cases: Vec<OriginCase> =
        serde_json::from_slice(&fs::read(fixtures().join("origin_responses.json")).unwrap()).unwrap();
    assert_eq!(cases.len(), 20);
    for case in &cases {
        assert_eq!(origin_oracle(&case.raw), case.expected, "oracle on {:?}", case.raw);
        let got = parse_origin_response(&case.raw).ok().map(|[a, b]| [a.to_string(), b.to_string()]);
        assert_eq!(got, case.expected, "parser on {:?}", case.raw);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn origin_parser_agrees_with_oracle(
        before in "[a-zA-Z .:!\n]{0,20}",
        items in prop::collection::vec("[A-Za-z]{1,3}", 0..4),
        quote in prop::sample::select(vec!["\"", "'", "", "“"]),
        after in "[a-zA-Z .]{0,10}",
    ) {
        let close = if quote == "“" { "”" } else { quote };
        let body: Vec<String> = items.iter().map(|i| format!("{quote}{i}{close}")).collect();
        let raw = format!("{before}[{}]{after}", body.join(", "));
        let got = parse_origin_response(&raw).ok().map(|[a, b]| [a.to_string(), b.to_string()]);
        prop_assert_eq!(got, origin_oracle(&raw), "{:?}", raw);
    }
}
