//! Deterministic three-system accounting corpus.
//!
//! Peak Holdings (PHAS), Acme (AAS) and Zenith (ZAS) keep their books with
//! different table and column vocabularies. Intercompany pairs are booked by
//! Acme and Zenith on opposite sides. Foreign keys between postings and the
//! chart of accounts are present in the data but never declared.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::amount::format_minor_units;
use crate::graph::{content_id, ContentId};
use crate::load::{column_id, table_id, ColumnType, TableFormat, TableSpec};
use crate::verify::{Filter, ReportQuery};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub intercompany_pairs: usize,
    /// Internal (single-company) transactions per system code.
    pub internal_transactions: BTreeMap<String, usize>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            intercompany_pairs: 2,
            internal_transactions: BTreeMap::from([("PHAS".to_string(), 1)]),
        }
    }
}

struct System {
    code: &'static str,
    company: &'static str,
    accounts_table: &'static str,
    postings_table: &'static str,
    ext: &'static str,
    delimiter: Option<&'static str>,
    /// account_number, name, category, balance
    account_cols: [&'static str; 4],
    /// txn_id, date, account_number, amount, dr_cr, company, counterparty, memo
    posting_cols: [&'static str; 8],
    debit: &'static str,
    credit: &'static str,
}

const SYSTEMS: [System; 3] = [
    System {
        code: "PHAS",
        company: "Peak",
        accounts_table: "gl_accounts",
        postings_table: "journal",
        ext: "csv",
        delimiter: None,
        account_cols: ["account_number", "name", "category", "balance"],
        posting_cols: ["txn_id", "date", "account_number", "amount", "dc", "company", "counterparty", "memo"],
        debit: "D",
        credit: "C",
    },
    System {
        code: "AAS",
        company: "Acme",
        accounts_table: "accounts",
        postings_table: "postings",
        ext: "csv",
        delimiter: None,
        account_cols: ["acct_no", "name", "category", "balance"],
        posting_cols: ["txn_id", "date", "acct_no", "amount", "dr_cr", "company", "counterparty", "memo"],
        debit: "debit",
        credit: "credit",
    },
    System {
        code: "ZAS",
        company: "Zenith",
        accounts_table: "chart",
        postings_table: "ledger_lines",
        ext: "txt",
        delimiter: Some(";"),
        account_cols: ["accountNumber", "title", "class", "balance"],
        posting_cols: ["ref", "date", "accountNumber", "amount", "side", "entity", "counterparty", "memo"],
        debit: "DR",
        credit: "CR",
    },
];

const HARMONIZED_ACCOUNT: [&str; 4] = ["account_number", "name", "category", "balance"];
const HARMONIZED_POSTING: [&str; 8] = [
    "txn_id",
    "date",
    "account_number",
    "amount",
    "dr_cr",
    "company",
    "counterparty",
    "memo",
];

struct Account {
    number: &'static str,
    name: &'static str,
    category: &'static str,
}

fn chart(code: &str, pairs: usize) -> Vec<Account> {
    let a = |number, name, category| Account { number, name, category };
    let mut v = match code {
        "PHAS" => vec![
            a("1000", "Cash", "BS"),
            a("1010", "Fixed Assets", "BS"),
            a("3000", "Share Capital", "BS"),
            a("3100", "Retained Earnings", "BS"),
            a("6000", "Operating Expenses", "PL"),
        ],
        "AAS" => vec![
            a("1100", "Cash", "BS"),
            a("1150", "Suspense", "BS"),
            a("1160", "Prepayments", "BS"),
            a("3200", "Share Capital", "BS"),
            a("4100", "Revenue", "PL"),
            a("5100", "Expenses", "PL"),
        ],
        _ => vec![
            a("1300", "Bank", "BS"),
            a("1350", "Clearing", "BS"),
            a("1360", "Deposits", "BS"),
            a("3300", "Equity", "BS"),
            a("4300", "Sales", "PL"),
            a("5300", "Cost of Sales", "PL"),
        ],
    };
    if pairs > 0 {
        match code {
            "AAS" => v.push(a("1200", "Due from Zenith", "BS")),
            "ZAS" => v.push(a("2300", "Due to Acme", "BS")),
            _ => {}
        }
    }
    v.sort_by_key(|x| x.number);
    v
}

/// One posting leg in harmonized terms.
#[derive(Debug, Clone)]
struct Leg {
    txn: String,
    date: String,
    account: &'static str,
    amount: i64,
    debit: bool,
    counterparty: String,
    memo: String,
}

fn legs(code: &str, spec: &FixtureSpec) -> Vec<Leg> {
    let leg = |txn: &str, date: &str, account, amount, debit, cp: &str, memo: &str| Leg {
        txn: txn.to_string(),
        date: date.to_string(),
        account,
        amount,
        debit,
        counterparty: cp.to_string(),
        memo: memo.to_string(),
    };
    let mut out = Vec::new();
    let internal = spec.internal_transactions.get(code).copied().unwrap_or(0);
    for j in 0..internal {
        let date = format!("2024-01-{:02}", j % 28 + 1);
        let j = j as i64;
        match code {
            "PHAS" => {
                let txn = format!("P-{:04}", j + 1);
                // Dirty memo: padded, with a decomposed e-acute.
                let memo = " Share issue for Cafe\u{301} Peak ";
                out.push(leg(&txn, &date, "1000", 50000 + 10000 * j, true, "", memo));
                out.push(leg(&txn, &date, "3000", 30025 + 5000 * j, false, "", memo));
                out.push(leg(&txn, &date, "3100", 19975 + 5000 * j, false, "", memo));
            }
            "AAS" => {
                let txn = format!("A-{:04}", 1001 + j);
                out.push(leg(&txn, &date, "1100", 100000 + 10000 * j, true, "", "Capital"));
                out.push(leg(&txn, &date, "3200", 100000 + 10000 * j, false, "", "Capital"));
            }
            _ => {
                let txn = format!("Z-{:04}", 1001 + j);
                out.push(leg(&txn, &date, "1300", 100000 + 10000 * j, true, "", "Capital"));
                out.push(leg(&txn, &date, "3300", 100000 + 10000 * j, false, "", "Capital"));
            }
        }
    }
    for k in 0..spec.intercompany_pairs {
        let amount = 10000 + 15000 * k as i64;
        let date = format!("2024-03-{:02}", k % 28 + 1);
        match code {
            "AAS" => {
                let txn = format!("A-{:04}", k + 1);
                let memo = format!("Intercompany sale {}", k + 1);
                out.push(leg(&txn, &date, "1200", amount, true, "Zenith ", &memo));
                out.push(leg(&txn, &date, "4100", amount, false, "", &memo));
            }
            "ZAS" => {
                let txn = format!("Z-{:04}", k + 1);
                let memo = format!(" Intercompany purchase {}", k + 1);
                out.push(leg(&txn, &date, "5300", amount, true, "", &memo));
                out.push(leg(&txn, &date, "2300", amount, false, "Acme", &memo));
            }
            _ => {}
        }
    }
    out
}

fn render(header: &[&str], rows: &[Vec<String>], delimiter: u8) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn pretty(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Everything the generator produced, plus the facts tests check against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub spec: FixtureSpec,
    /// Relative path → bytes. Does not include MANIFEST.json.
    pub files: BTreeMap<PathBuf, Vec<u8>>,
    /// Query name → query.
    pub queries: BTreeMap<String, ReportQuery>,
    /// (referencing, referenced) column ids after integration.
    pub planted_fks: Vec<(ContentId, ContentId)>,
}

pub const CONFIG_FILE: &str = "pipeline.json";
pub const MANIFEST_FILE: &str = "MANIFEST.json";

impl Fixture {
    pub fn build(spec: &FixtureSpec) -> Fixture {
        let mut files = BTreeMap::new();
        let mut queries = BTreeMap::new();
        let mut planted = Vec::new();
        let mut tables = Vec::new();
        let mut renames = Vec::new();
        let mut recodings = Vec::new();

        for sys in &SYSTEMS {
            let delimiter = sys.delimiter.map_or(b',', |d| d.as_bytes()[0]);
            let legs = legs(sys.code, spec);
            let mut balances: BTreeMap<&str, i64> = BTreeMap::new();
            for l in &legs {
                *balances.entry(l.account).or_default() += if l.debit { l.amount } else { -l.amount };
            }
            let accounts: Vec<Vec<String>> = chart(sys.code, spec.intercompany_pairs)
                .iter()
                .map(|a| {
                    vec![
                        a.number.to_string(),
                        a.name.to_string(),
                        a.category.to_string(),
                        format_minor_units(balances.get(a.number).copied().unwrap_or(0)),
                    ]
                })
                .collect();
            let postings: Vec<Vec<String>> = legs
                .iter()
                .map(|l| {
                    vec![
                        l.txn.clone(),
                        l.date.clone(),
                        l.account.to_string(),
                        format_minor_units(l.amount),
                        if l.debit { sys.debit } else { sys.credit }.to_string(),
                        sys.company.to_string(),
                        l.counterparty.clone(),
                        l.memo.clone(),
                    ]
                })
                .collect();

            for (table, header, rows, decimal) in [
                (sys.accounts_table, &sys.account_cols[..], &accounts, sys.account_cols[3]),
                (sys.postings_table, &sys.posting_cols[..], &postings, sys.posting_cols[3]),
            ] {
                let data = PathBuf::from(sys.code).join(format!("{table}.{}", sys.ext));
                files.insert(data.clone(), render(header, rows, delimiter));
                let spec_path = PathBuf::from("specs").join(format!("{}.{table}.json", sys.code));
                let table_spec = TableSpec {
                    name: table.to_string(),
                    format: if sys.delimiter.is_some() {
                        TableFormat::Delimited
                    } else {
                        TableFormat::Csv
                    },
                    delimiter: sys.delimiter.map(str::to_string),
                    has_header: true,
                    columns: BTreeMap::from([(decimal.to_string(), ColumnType::Decimal)]),
                };
                files.insert(spec_path.clone(), pretty(&table_spec));
                tables.push(json!({
                    "source": data.to_string_lossy(),
                    "spec": spec_path.to_string_lossy(),
                    "system": sys.code,
                }));
            }

            for (from, to) in [(sys.accounts_table, "Account"), (sys.postings_table, "Posting")] {
                renames.push(json!({"source_system": sys.code, "from": from, "to": to}));
            }
            let raw: Vec<&str> = sys.account_cols.iter().chain(&sys.posting_cols).copied().collect();
            let harmonized: Vec<&str> = HARMONIZED_ACCOUNT.iter().chain(&HARMONIZED_POSTING).copied().collect();
            let mut seen = Vec::new();
            for (from, to) in raw.iter().zip(&harmonized) {
                if from != to && !seen.contains(from) {
                    seen.push(*from);
                    renames.push(json!({"source_system": sys.code, "from": from, "to": to}));
                }
            }
            if sys.debit != "debit" {
                recodings.push(json!({
                    "column": format!("{}.Posting.dr_cr", sys.code),
                    "map": {sys.debit: "debit", sys.credit: "credit"},
                }));
            }

            let acol = |i: usize| column_id(sys.code, sys.accounts_table, sys.account_cols[i]);
            let pcol = |i: usize| column_id(sys.code, sys.postings_table, sys.posting_cols[i]);
            for (suffix, token) in [("ledger-debit", sys.debit), ("ledger-credit", sys.credit)] {
                queries.insert(
                    format!("{}.{suffix}", sys.code),
                    ReportQuery {
                        aggregate: pcol(3),
                        filters: vec![Filter::Attribute {
                            column: pcol(4),
                            value: token.to_string(),
                        }],
                        group_by: Some(pcol(2)),
                        target: table_id(sys.code, sys.postings_table),
                    },
                );
            }
            for (suffix, category) in [("balance-sheet", "BS"), ("profit-loss", "PL")] {
                queries.insert(
                    format!("{}.{suffix}", sys.code),
                    ReportQuery {
                        aggregate: acol(3),
                        filters: vec![Filter::Attribute {
                            column: acol(2),
                            value: category.to_string(),
                        }],
                        group_by: Some(acol(1)),
                        target: table_id(sys.code, sys.accounts_table),
                    },
                );
            }
            planted.push((
                column_id(sys.code, "Posting", "account_number"),
                column_id(sys.code, "Account", "account_number"),
            ));
        }

        let mut query_paths = Vec::new();
        for (name, q) in &queries {
            let path = PathBuf::from("queries").join(format!("{name}.json"));
            let mut text = q.canonical_json().into_bytes();
            text.push(b'\n');
            files.insert(path.clone(), text);
            query_paths.push(path.to_string_lossy().into_owned());
        }
        files.insert("mapping.json".into(), pretty(&json!({"renames": renames, "recodings": recodings})));
        files.insert(
            "criterion.json".into(),
            pretty(&json!({
                "scope": "Posting",
                "equal_attributes": ["amount", "date"],
                "mirror": {"counterparty_swap": true, "drcr_opposed": true},
            })),
        );
        files.insert(
            "fk.json".into(),
            pretty(&json!({"min_inclusion": 1.0, "require_unique": true})),
        );
        files.insert(
            "reuse.json".into(),
            pretty(&json!({"formats": ["csv-tables", "triples", "dot"]})),
        );
        files.insert("fixture.json".into(), pretty(spec));

        let all_gate = json!(["stats", "dot-export", "report-check", "trial-balance"]);
        let config = json!({
            "name": "peak-acme-zenith",
            "slices": [{
                "name": "accounting",
                "sources": ["PHAS/*.csv", "AAS/*.csv", "ZAS/*.txt"],
                "tables": tables,
            }],
            "stages": [
                {"type": "collect", "bunits": [{"kind": "collect", "params": []}]},
                {"type": "load", "bunits": [
                    {"kind": "load_table", "params": []},
                    {"kind": "register_report", "params": query_paths},
                    {"kind": "snapshot_report", "params": []},
                ]},
                {"type": "evolve", "bunits": [{"kind": "clean_pass", "params": []}]},
                {"type": "evolve", "bunits": [
                    {"kind": "integrate_sources", "params": ["mapping.json"]},
                    {"kind": "infer_foreign_keys", "params": ["fk.json"]},
                ]},
                {"type": "evolve", "bunits": [
                    {"kind": "unify_types", "params": []},
                    {"kind": "apply_seed", "params": []},
                ]},
                {"type": "evolve", "bunits": [{"kind": "identity_merge", "params": ["criterion.json"]}]},
                {"type": "evolve", "bunits": [
                    {"kind": "dere_transform", "params": []},
                    {"kind": "extract_definitions", "params": []},
                ]},
                {"type": "assimilate", "bunits": [{"kind": "assimilate", "params": []}]},
                {"type": "reuse", "bunits": [{"kind": "reuse_export", "params": ["reuse.json"]}]},
            ],
            "gates": (1..=6).map(|i| json!({"after": i, "actions": all_gate})).collect::<Vec<_>>(),
        });
        files.insert(CONFIG_FILE.into(), pretty(&config));

        Fixture {
            spec: spec.clone(),
            files,
            queries,
            planted_fks: planted,
        }
    }

    /// `{"files": [{"path", "sha256"}]}` over every generated file.
    pub fn manifest(&self) -> Vec<u8> {
        let entries: Vec<_> = self
            .files
            .iter()
            .map(|(p, bytes)| json!({"path": p.to_string_lossy(), "sha256": content_id(bytes).to_hex()}))
            .collect();
        pretty(&json!({ "files": entries }))
    }

    pub fn write(&self, destination: &Path) -> io::Result<()> {
        for (rel, bytes) in &self.files {
            let path = destination.join(rel);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, bytes)?;
        }
        fs::write(destination.join(MANIFEST_FILE), self.manifest())
    }
}

pub fn generate_fixture(spec: &FixtureSpec, destination: &Path) -> io::Result<Fixture> {
    let fixture = Fixture::build(spec);
    fixture.write(destination)?;
    Ok(fixture)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(f: &Fixture, path: &str) -> String {
        String::from_utf8(f.files[Path::new(path)].clone()).unwrap()
    }

    /// Sum of signed amounts per account by reading the raw file back.
    fn balances(body: &str, delim: char, acct: usize, amt: usize, dc: usize, debit: &str) -> BTreeMap<String, i64> {
        let mut out = BTreeMap::new();
        for line in body.lines().skip(1) {
            let f: Vec<&str> = line.split(delim).collect();
            let cents = crate::amount::parse_minor_units(f[amt]).unwrap();
            *out.entry(f[acct].to_string()).or_insert(0) += if f[dc] == debit { cents } else { -cents };
        }
        out
    }

    #[test]
    fn intercompany_balances_are_350() {
        let f = Fixture::build(&FixtureSpec::default());
        let aas = balances(&text(&f, "AAS/postings.csv"), ',', 2, 3, 4, "debit");
        assert_eq!(aas["1200"], 35000);
        let zas = balances(&text(&f, "ZAS/ledger_lines.txt"), ';', 2, 3, 4, "DR");
        assert_eq!(zas["2300"], -35000);
        assert!(text(&f, "AAS/accounts.csv").contains("1200,Due from Zenith,BS,350.00\n"));
        assert!(text(&f, "ZAS/chart.txt").contains("2300;Due to Acme;BS;-350.00\n"));
    }

    #[test]
    fn ledgers_balance_and_amounts_are_quarter_multiples() {
        let f = Fixture::build(&FixtureSpec {
            intercompany_pairs: 3,
            internal_transactions: BTreeMap::from([("PHAS".into(), 2), ("AAS".into(), 1), ("ZAS".into(), 1)]),
        });
        for (path, delim, debit) in [
            ("PHAS/journal.csv", ',', "D"),
            ("AAS/postings.csv", ',', "debit"),
            ("ZAS/ledger_lines.txt", ';', "DR"),
        ] {
            let body = text(&f, path);
            let b = balances(&body, delim, 2, 3, 4, debit);
            assert_eq!(b.values().sum::<i64>(), 0, "{path}");
            for line in body.lines().skip(1) {
                let amt = line.split(delim).nth(3).unwrap();
                assert_eq!(crate::amount::parse_minor_units(amt).unwrap() % 25, 0);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_manifest_hashes_match() {
        let dir = tempfile::tempdir().unwrap();
        let a = generate_fixture(&FixtureSpec::default(), &dir.path().join("a")).unwrap();
        let b = generate_fixture(&FixtureSpec::default(), &dir.path().join("b")).unwrap();
        assert_eq!(a, b);
        for rel in a.files.keys().map(PathBuf::as_path).chain([Path::new(MANIFEST_FILE)]) {
            assert_eq!(
                fs::read(dir.path().join("a").join(rel)).unwrap(),
                fs::read(dir.path().join("b").join(rel)).unwrap()
            );
        }
        let manifest: serde_json::Value = serde_json::from_slice(&a.manifest()).unwrap();
        let entries = manifest["files"].as_array().unwrap();
        assert_eq!(entries.len(), a.files.len());
        for e in entries {
            let bytes = fs::read(dir.path().join("a").join(e["path"].as_str().unwrap())).unwrap();
            assert_eq!(e["sha256"].as_str().unwrap(), content_id(&bytes).to_hex());
        }
    }

    #[test]
    fn zero_pairs_have_no_counterparties() {
        let f = Fixture::build(&FixtureSpec {
            intercompany_pairs: 0,
            internal_transactions: BTreeMap::from([("PHAS".into(), 1)]),
        });
        assert!(!text(&f, "AAS/accounts.csv").contains("Zenith"));
        assert_eq!(text(&f, "AAS/postings.csv").lines().count(), 1);
        assert_eq!(f.queries.len(), 12);
    }
}
