//! Seeded synthetic task generation.
//!
//! Every distinctive value (names, identifiers, answers) carries a random
//! six-character token unique within its task, so keyword sets never
//! contain one another as substrings.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::record::{render_decimal, Record, Scalar};
use super::table::{Table, ToolSemantics};
use super::task::{AggregateOp, Category, GeneratedTask, GoldHop, Task, TaskShape};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("hop count must be between 1 and 5, got {0}")]
    InvalidHops(usize),
}

pub const MAX_HOPS: usize = 5;

const TOKEN_ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
const ADJECTIVES: &[&str] = &[
    "Brightline", "Northwind", "Silverleaf", "Ironbridge", "Bluecrest", "Redwater", "Goldfield",
    "Stonegate", "Clearpath", "Harborview",
];
const NOUNS: &[&str] = &[
    "Foods", "Logistics", "Textiles", "Holdings", "Pharma", "Robotics", "Mining", "Media",
    "Energy", "Retail",
];
const CITIES: &[&str] = &[
    "Ravenport", "Eastmoor", "Kingsford", "Larkhaven", "Millbrook", "Westfall", "Ashdown",
    "Pinecrest",
];
const FIRST_NAMES: &[&str] = &[
    "Maria", "Jonas", "Aiko", "Tomas", "Leila", "Ravi", "Ingrid", "Kwame", "Sofia", "Dmitri",
];
const LAST_NAMES: &[&str] = &[
    "Okafor", "Lindqvist", "Tanaka", "Moreau", "Haddad", "Iyer", "Novak", "Mensah", "Castillo",
    "Brandt",
];
const CAUSES: &[&str] = &[
    "Breach", "Negligence", "Fraud", "Trespass", "Defamation", "Infringement", "Nuisance",
];
const SPECIALTIES: &[&str] = &["tax", "labor", "contract", "maritime", "patent", "antitrust"];
const MATTERS: &[&str] = &["contract", "lease", "labor", "patent", "customs", "insurance"];
const TOPICS: &[&str] = &[
    "lease default", "wage arrears", "loan guarantee", "product liability", "trademark misuse",
    "sales contract",
];

/// One link of the k-hop chain schema.
struct ChainTable {
    name: &'static str,
    key: &'static str,
    fields: &'static [&'static str],
    link: &'static str,
    answer: &'static str,
    answer_label: &'static str,
}

const CHAIN: [ChainTable; MAX_HOPS] = [
    ChainTable {
        name: "Company",
        key: "name",
        fields: &["name", "industry", "hq_city", "lead_case"],
        link: "lead_case",
        answer: "hq_city",
        answer_label: "headquarters city",
    },
    ChainTable {
        name: "Case",
        key: "case_no",
        fields: &["case_no", "cause", "filed_year", "firm_id"],
        link: "firm_id",
        answer: "cause",
        answer_label: "cause of action",
    },
    ChainTable {
        name: "LawFirm",
        key: "firm_id",
        fields: &["firm_id", "firm_name", "founded_city", "partner"],
        link: "partner",
        answer: "firm_name",
        answer_label: "registered name",
    },
    ChainTable {
        name: "Lawyer",
        key: "license_no",
        fields: &["license_no", "lawyer_name", "specialty", "court_code"],
        link: "court_code",
        answer: "lawyer_name",
        answer_label: "full name",
    },
    ChainTable {
        name: "Court",
        key: "court_code",
        fields: &["court_code", "court_name", "presiding_judge", "circuit"],
        link: "circuit",
        answer: "presiding_judge",
        answer_label: "presiding judge",
    },
];

struct Gen {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Gen {
    fn new(family: u64, seed: u64, k: u64) -> Self {
        let mixed = splitmix64(splitmix64(family ^ 0x9E37_79B9_7F4A_7C15) ^ seed.rotate_left(17) ^ k);
        Self {
            rng: ChaCha8Rng::seed_from_u64(mixed),
            used: HashSet::new(),
        }
    }

    fn token(&mut self) -> String {
        loop {
            let t: String = (0..6)
                .map(|_| *TOKEN_ALPHABET.choose(&mut self.rng).expect("non-empty") as char)
                .collect();
            if self.used.insert(t.clone()) {
                return t;
            }
        }
    }

    fn pick(&mut self, list: &[&'static str]) -> &'static str {
        list.choose(&mut self.rng).expect("non-empty list")
    }

    fn tagged(&mut self, prefix: &str) -> String {
        let t = self.token();
        format!("{prefix}-{t}")
    }

    fn company_name(&mut self, adjective: Option<&str>, noun: Option<&str>) -> String {
        let a = adjective.map(str::to_string).unwrap_or_else(|| self.pick(ADJECTIVES).to_string());
        let n = noun.map(str::to_string).unwrap_or_else(|| self.pick(NOUNS).to_string());
        let t = self.token();
        format!("{a} {n} {t}")
    }

    fn person(&mut self) -> String {
        let f = self.pick(FIRST_NAMES);
        let l = self.pick(LAST_NAMES);
        let t = self.token();
        format!("{f} {l} {t}")
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn record(pairs: Vec<(&str, Scalar)>) -> Record {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Builds one row of chain table `i`; `key` is the row's key value and
/// `link` the value it points at in table `i + 1`.
fn chain_row(g: &mut Gen, i: usize, key: &str, link: &str, company: Option<&str>) -> Record {
    let t = &CHAIN[i];
    let mut row = Record::new();
    row.insert(t.key.to_string(), Scalar::text(key));
    row.insert(t.link.to_string(), Scalar::text(link));
    match i {
        0 => {
            debug_assert!(company.is_some());
            let industry = g.pick(NOUNS).to_lowercase();
            let city = g.pick(CITIES);
            let city = g.tagged(city);
            row.insert("industry".into(), Scalar::text(industry));
            row.insert("hq_city".into(), Scalar::text(city));
        }
        1 => {
            let cause = g.pick(CAUSES);
            let cause = g.tagged(cause);
            let year = g.rng.random_range(2012..=2024);
            row.insert("cause".into(), Scalar::text(cause));
            row.insert("filed_year".into(), Scalar::Int(year));
        }
        2 => {
            let a = g.pick(LAST_NAMES);
            let b = g.pick(LAST_NAMES);
            let t = g.token();
            let city = g.pick(CITIES);
            row.insert("firm_name".into(), Scalar::text(format!("{a} & {b} {t}")));
            row.insert("founded_city".into(), Scalar::text(city));
        }
        3 => {
            let name = g.person();
            let spec = g.pick(SPECIALTIES);
            row.insert("lawyer_name".into(), Scalar::text(name));
            row.insert("specialty".into(), Scalar::text(spec));
        }
        _ => {
            let city = g.pick(CITIES);
            let l = g.pick(LAST_NAMES);
            let t = g.token();
            row.insert("court_name".into(), Scalar::text(format!("{city} District Court")));
            row.insert("presiding_judge".into(), Scalar::text(format!("Judge {l} {t}")));
        }
    }
    row
}

fn key_value(g: &mut Gen, i: usize) -> String {
    match i {
        0 => g.company_name(None, None),
        1 => g.tagged("CASE"),
        2 => g.tagged("FIRM"),
        3 => g.tagged("LIC"),
        _ => g.tagged("CRT"),
    }
}

fn link_prefix(i: usize) -> &'static str {
    ["CASE", "FIRM", "LIC", "CRT", "CIRCUIT"][i]
}

fn chain_description(i: usize, inner: &str) -> String {
    match i {
        0 => format!("the company named {inner}"),
        1 => format!("the lead case of {inner}"),
        2 => format!("the law firm that handled {inner}"),
        3 => format!("the partner of {inner}"),
        _ => format!("the court where {inner} is admitted"),
    }
}

/// Synthesizes a k-hop lookup chain `Company -> Case -> LawFirm -> Lawyer -> Court`
/// truncated to `k` tables, plus two decoy chains.
pub fn generate_khop_task(seed: u64, k: usize) -> Result<GeneratedTask, GenError> {
    if !(1..=MAX_HOPS).contains(&k) {
        return Err(GenError::InvalidHops(k));
    }
    let mut g = Gen::new(1, seed, k as u64);

    // keys[i] is the key of chain entity i; the last entity links to a dangling value.
    let keys: Vec<String> = (0..k).map(|i| key_value(&mut g, i)).collect();
    let dangling = g.tagged(link_prefix(k - 1));

    let mut tables: Vec<Table> = CHAIN[..k]
        .iter()
        .map(|c| Table::new(c.name, c.key, c.fields))
        .collect();

    let mut gold_rows = Vec::with_capacity(k);
    for i in 0..k {
        let link = keys.get(i + 1).cloned().unwrap_or_else(|| dangling.clone());
        let row = chain_row(&mut g, i, &keys[i], &link, Some(&keys[0]));
        gold_rows.push(row);
    }

    // Decoy chains: the first starts from a near-miss company name.
    let start_words: Vec<&str> = keys[0].split(' ').collect();
    let mut decoy_rows: Vec<Vec<Record>> = vec![Vec::new(); k];
    for d in 0..2 {
        let first = if d == 0 {
            g.company_name(Some(start_words[0]), Some(start_words[1]))
        } else {
            g.company_name(None, None)
        };
        let mut decoy_keys = vec![first];
        for i in 1..k {
            decoy_keys.push(key_value(&mut g, i));
        }
        let decoy_dangling = g.tagged(link_prefix(k - 1));
        for i in 0..k {
            let link = decoy_keys.get(i + 1).cloned().unwrap_or_else(|| decoy_dangling.clone());
            let row = chain_row(&mut g, i, &decoy_keys[i], &link, Some(&decoy_keys[0]));
            decoy_rows[i].push(row);
        }
    }

    for i in 0..k {
        let mut rows = decoy_rows[i].clone();
        let pos = g.rng.random_range(0..=rows.len());
        rows.insert(pos, gold_rows[i].clone());
        tables[i].rows = rows;
    }

    let answer = gold_rows[k - 1][CHAIN[k - 1].answer].render();
    let mut entity = keys[0].clone();
    for (i, _) in CHAIN.iter().enumerate().take(k) {
        entity = chain_description(i, &entity);
    }
    let query = format!("What is the {} of {}?", CHAIN[k - 1].answer_label, entity);

    let gold_path = (0..k)
        .map(|i| GoldHop {
            table: CHAIN[i].name.to_string(),
            field: CHAIN[i].key.to_string(),
            value: keys[i].clone(),
            semantics: ToolSemantics::GetRecord,
        })
        .collect();

    let task = Task {
        id: format!("{k}hop-s{seed:04}"),
        category: Category::Hop(k as u8),
        seed,
        query,
        key_answers: vec![answer],
        key_middles: keys[1..].to_vec(),
        gold_path,
        tables: CHAIN[..k].iter().map(|c| c.name.to_string()).collect(),
        shape: TaskShape::KHop {
            answer_field: CHAIN[k - 1].answer.to_string(),
            answer_label: CHAIN[k - 1].answer_label.to_string(),
            link_fields: CHAIN[..k - 1].iter().map(|c| c.link.to_string()).collect(),
        },
    };
    Ok(GeneratedTask { task, tables })
}

/// Synthesizes a complaint-style drafting task over party, counsel and
/// statute tables.
pub fn generate_writing_task(seed: u64) -> GeneratedTask {
    let mut g = Gen::new(2, seed, 0);

    let mut party = Table::new(
        "Party",
        "party_id",
        &["party_id", "party_name", "role", "id_number", "address"],
    );
    let mut counsel = Table::new(
        "Counsel",
        "license_no",
        &["license_no", "counsel_name", "firm", "client_id"],
    );
    let mut statute = Table::new("Statute", "statute_id", &["statute_id", "title", "topic"]);

    let make_party = |g: &mut Gen, role: &str| {
        let id = g.tagged("PTY");
        let first = g.pick(FIRST_NAMES);
        let last = g.pick(LAST_NAMES);
        let number = g.tagged("ID");
        let street = g.pick(CITIES);
        let house = g.rng.random_range(1..=400);
        let t = g.token();
        let address = format!("{house} {street} Road {t}");
        let row = record(vec![
            ("party_id", Scalar::text(&id)),
            ("party_name", Scalar::text(format!("{first} {last}"))),
            ("role", Scalar::text(role)),
            ("id_number", Scalar::text(&number)),
            ("address", Scalar::text(&address)),
        ]);
        (id, row)
    };
    let (plaintiff_id, plaintiff) = make_party(&mut g, "plaintiff");
    let (defendant_id, defendant) = make_party(&mut g, "defendant");
    let (_, bystander) = make_party(&mut g, "witness");
    let mut party_rows = vec![plaintiff.clone(), defendant.clone(), bystander];
    party_rows.shuffle(&mut g.rng);
    party.rows = party_rows;

    let make_counsel = |g: &mut Gen, client: &str| {
        let license = g.tagged("LIC");
        let name = g.person();
        let l = g.pick(LAST_NAMES);
        let t = g.token();
        record(vec![
            ("license_no", Scalar::text(license)),
            ("counsel_name", Scalar::text(name)),
            ("firm", Scalar::text(format!("{l} Legal {t}"))),
            ("client_id", Scalar::text(client)),
        ])
    };
    let defense_counsel = make_counsel(&mut g, &defendant_id);
    let plaintiff_counsel = make_counsel(&mut g, &plaintiff_id);
    let mut counsel_rows = vec![defense_counsel.clone(), plaintiff_counsel];
    counsel_rows.shuffle(&mut g.rng);
    counsel.rows = counsel_rows;

    let topic_word = g.pick(TOPICS);
    let topic = format!("{topic_word} {}", g.token());
    let decoy_word = g.pick(TOPICS);
    let decoy_topic = format!("{decoy_word} {}", g.token());
    let mut statute_rows = Vec::new();
    let mut cited = Vec::new();
    for (topic, n) in [(&topic, 2), (&decoy_topic, 2)] {
        for _ in 0..n {
            let id = g.tagged("STAT");
            let article = g.rng.random_range(1..=300);
            statute_rows.push(record(vec![
                ("statute_id", Scalar::text(&id)),
                ("title", Scalar::text(format!("Civil Code article {article}"))),
                ("topic", Scalar::text(topic.as_str())),
            ]));
            cited.push((topic.clone(), id));
        }
    }
    let statute_ids: Vec<String> = cited
        .iter()
        .filter(|(t, _)| *t == topic)
        .map(|(_, id)| id.clone())
        .collect();
    statute_rows.shuffle(&mut g.rng);
    statute.rows = statute_rows;

    let text = |r: &Record, f: &str| r[f].render();
    let query = format!(
        "Plaintiff {} (party id {}) has sued defendant {} (party id {}) in a dispute about {}. \
         Draft a defense statement on behalf of the defendant. The statement must give the \
         identity numbers of both parties and the defendant's address, name the defendant's \
         counsel together with the counsel's license number and law firm, and cite every statute \
         whose topic is \"{}\".",
        text(&plaintiff, "party_name"),
        plaintiff_id,
        text(&defendant, "party_name"),
        defendant_id,
        topic,
        topic,
    );

    let mut key_answers = vec![
        text(&plaintiff, "id_number"),
        text(&defendant, "id_number"),
        text(&defendant, "address"),
        text(&defense_counsel, "counsel_name"),
        text(&defense_counsel, "license_no"),
        text(&defense_counsel, "firm"),
    ];
    key_answers.extend(statute_ids);

    let gold_path = vec![
        GoldHop {
            table: "Party".into(),
            field: "party_id".into(),
            value: plaintiff_id.clone(),
            semantics: ToolSemantics::GetRecord,
        },
        GoldHop {
            table: "Party".into(),
            field: "party_id".into(),
            value: defendant_id.clone(),
            semantics: ToolSemantics::GetRecord,
        },
        GoldHop {
            table: "Counsel".into(),
            field: "client_id".into(),
            value: defendant_id.clone(),
            semantics: ToolSemantics::FilterRecords,
        },
        GoldHop {
            table: "Statute".into(),
            field: "topic".into(),
            value: topic.clone(),
            semantics: ToolSemantics::FilterRecords,
        },
    ];

    let task = Task {
        id: format!("writing-s{seed:04}"),
        category: Category::Writing,
        seed,
        query,
        key_answers,
        key_middles: Vec::new(),
        gold_path,
        tables: vec!["Party".into(), "Counsel".into(), "Statute".into()],
        shape: TaskShape::Writing {
            plaintiff_id,
            defendant_id,
            topic,
        },
    };
    GeneratedTask {
        task,
        tables: vec![party, counsel, statute],
    }
}

/// Synthesizes a sum-or-mean task over 12..=30 dockets whose amounts are
/// only reachable one `get_ledger` call at a time.
pub fn generate_aggregation_task(seed: u64) -> GeneratedTask {
    let mut g = Gen::new(3, seed, 0);
    let op = if g.rng.random_bool(0.5) {
        AggregateOp::Sum
    } else {
        AggregateOp::Mean
    };
    let company = g.company_name(None, None);
    let words: Vec<String> = company.split(' ').map(str::to_string).collect();
    let near_miss = g.company_name(Some(&words[0]), Some(&words[1]));
    let other = g.company_name(None, None);

    let n = g.rng.random_range(12..=30usize);
    let decoys = g.rng.random_range(4..=8usize);

    let mut docket = Table::new("Docket", "docket_id", &["docket_id", "company", "matter"]);
    let mut ledger = Table::new("Ledger", "docket_id", &["docket_id", "amount"])
        .with_tools(&[ToolSemantics::GetRecord]);

    let mut entries: Vec<(String, String, i64)> = Vec::new();
    for i in 0..n + decoys {
        let owner = if i < n {
            company.clone()
        } else if i % 2 == 0 {
            near_miss.clone()
        } else {
            other.clone()
        };
        let id = g.tagged("DKT");
        let amount = g.rng.random_range(100_000..=999_999i64);
        entries.push((id, owner, amount));
    }
    entries.shuffle(&mut g.rng);

    let mut matching_ids = Vec::new();
    let mut total: i64 = 0;
    for (id, owner, amount) in &entries {
        let matter = g.pick(MATTERS);
        docket.rows.push(record(vec![
            ("docket_id", Scalar::text(id)),
            ("company", Scalar::text(owner)),
            ("matter", Scalar::text(matter)),
        ]));
        ledger.rows.push(record(vec![
            ("docket_id", Scalar::text(id)),
            ("amount", Scalar::Int(*amount)),
        ]));
        if *owner == company {
            matching_ids.push(id.clone());
            total += amount;
        }
    }

    let (answer, what) = match op {
        AggregateOp::Sum => (total.to_string(), "total"),
        AggregateOp::Mean => (render_decimal(total as f64 / n as f64), "average"),
    };
    let query = format!(
        "What is the {what} ledger amount across all dockets filed by {company}? \
         Each docket's amount is recorded in the Ledger table under its docket_id."
    );

    let mut gold_path = vec![GoldHop {
        table: "Docket".into(),
        field: "company".into(),
        value: company.clone(),
        semantics: ToolSemantics::FilterRecords,
    }];
    gold_path.extend(matching_ids.iter().map(|id| GoldHop {
        table: "Ledger".into(),
        field: "docket_id".into(),
        value: id.clone(),
        semantics: ToolSemantics::GetRecord,
    }));

    let task = Task {
        id: format!("aggregation-s{seed:04}"),
        category: Category::Aggregation,
        seed,
        query,
        key_answers: vec![answer],
        key_middles: matching_ids,
        gold_path,
        tables: vec!["Docket".into(), "Ledger".into()],
        shape: TaskShape::Aggregation {
            op,
            filter_table: "Docket".into(),
            filter_field: "company".into(),
            filter_value: company,
            join_field: "docket_id".into(),
            value_table: "Ledger".into(),
            value_field: "amount".into(),
        },
    };
    GeneratedTask {
        task,
        tables: vec![docket, ledger],
    }
}

/// Generates a task of the given category.
pub fn generate(category: Category, seed: u64) -> GeneratedTask {
    match category {
        Category::Hop(k) => generate_khop_task(seed, k as usize).expect("category hop count in range"),
        Category::Writing => generate_writing_task(seed),
        Category::Aggregation => generate_aggregation_task(seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hop_has_no_middles() {
        let g = generate_khop_task(1, 1).unwrap();
        assert!(g.task.key_middles.is_empty());
        assert_eq!(g.task.gold_path.len(), 1);
    }

    #[test]
    fn three_hop_shape() {
        let g = generate_khop_task(1, 3).unwrap();
        assert_eq!(g.task.key_middles.len(), 2);
        assert_eq!(g.task.gold_path.len(), 3);
        assert_eq!(g.tables.len(), 3);
    }

    #[test]
    fn same_seed_same_task() {
        assert_eq!(generate_khop_task(7, 4).unwrap(), generate_khop_task(7, 4).unwrap());
        assert_eq!(generate_writing_task(5), generate_writing_task(5));
        assert_eq!(generate_aggregation_task(2), generate_aggregation_task(2));
        assert_ne!(generate_khop_task(7, 4).unwrap(), generate_khop_task(8, 4).unwrap());
    }

    #[test]
    fn hop_count_is_checked() {
        assert_eq!(generate_khop_task(1, 0), Err(GenError::InvalidHops(0)));
        assert_eq!(generate_khop_task(1, 6), Err(GenError::InvalidHops(6)));
    }

    #[test]
    fn generated_tables_validate() {
        for seed in 0..20 {
            for k in 1..=5 {
                for t in generate_khop_task(seed, k).unwrap().tables {
                    t.validate().unwrap();
                }
            }
            for t in generate_writing_task(seed).tables {
                t.validate().unwrap();
            }
            for t in generate_aggregation_task(seed).tables {
                t.validate().unwrap();
            }
        }
    }

    #[test]
    fn writing_keywords_are_distinctive() {
        for seed in 0..20 {
            let task = generate_writing_task(seed).task;
            assert!(task.key_answers.len() >= 6);
            for a in &task.key_answers {
                assert!(a.len() >= 6, "{a}");
                for b in &task.key_answers {
                    if a != b {
                        assert!(!a.contains(b.as_str()), "{a} contains {b}");
                    }
                }
            }
        }
    }
}
