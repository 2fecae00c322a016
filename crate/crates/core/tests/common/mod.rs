//! Fixtures shared by the integration and acceptance test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use serde::Deserialize;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

#[derive(Debug, Deserialize)]
pub struct SuiteCase {
    pub name: String,
    pub category: String,
    pub mode: String,
    pub k: usize,
    pub confidence: String,
    #[serde(default)]
    pub gap: bool,
    pub text: String,
}

#[derive(Debug, Deserialize)]
struct Suite {
    case: Vec<SuiteCase>,
}

pub fn segmenter_suite() -> Vec<SuiteCase> {
    let text = std::fs::read_to_string(data_dir().join("segmenter_suite.toml")).unwrap();
    toml::from_str::<Suite>(&text).unwrap().case
}

/// One row of the high-precision `k / ln(1 + tok)` table.
#[derive(Debug)]
pub struct OracleRow {
    pub k: u32,
    pub tok: u64,
    pub value: f64,
}

pub fn dot_norm_oracle() -> Vec<OracleRow> {
    let text = std::fs::read_to_string(data_dir().join("dot_norm_oracle.csv")).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("k,"))
        .map(|l| {
            let mut f = l.split(',');
            OracleRow {
                k: f.next().unwrap().parse().unwrap(),
                tok: f.next().unwrap().parse().unwrap(),
                // Parsing the 50-digit decimal rounds correctly to nearest f64.
                value: f.next().unwrap().parse().unwrap(),
            }
        })
        .collect()
}
