//! The aggregation taxonomy: four categories, twelve subtypes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Element,
    Set,
    Temporal,
    Scientific,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subtype {
    Retrieve,
    Inverse,
    Math,
    Filter,
    Existence,
    Compose,
    Change,
    TempCalc,
    CompIntensive,
    Predict,
    Statistic,
    Correlate,
}

pub struct TaxonomyRow {
    pub category: Category,
    pub subtype: Subtype,
    pub signature: &'static str,
    pub description: &'static str,
}

/// The single table every prompt and validator reads from.
pub const TAXONOMY: [TaxonomyRow; 12] = [
    TaxonomyRow { category: Category::Element, subtype: Subtype::Retrieve, signature: "Retrieve(x)", description: "look up one fact or entity" },
    TaxonomyRow { category: Category::Element, subtype: Subtype::Inverse, signature: "Inverse(x)", description: "identify an entity from indirect clues" },
    TaxonomyRow { category: Category::Element, subtype: Subtype::Math, signature: "Math(x, y)", description: "arithmetic between individual values" },
    TaxonomyRow { category: Category::Set, subtype: Subtype::Filter, signature: "Filter(Y)", description: "select or rank members of a set by a condition" },
    TaxonomyRow { category: Category::Set, subtype: Subtype::Existence, signature: "Existence(x, Y)", description: "membership tests and counting occurrences" },
    TaxonomyRow { category: Category::Set, subtype: Subtype::Compose, signature: "Compose(Y, Z)", description: "intersection, difference or union of sets" },
    TaxonomyRow { category: Category::Temporal, subtype: Subtype::Change, signature: "Change(x1, ..., xn)", description: "rates and amounts of change over time" },
    TaxonomyRow { category: Category::Temporal, subtype: Subtype::TempCalc, signature: "TempCalc(t1, t2)", description: "durations and date arithmetic" },
    TaxonomyRow { category: Category::Scientific, subtype: Subtype::CompIntensive, signature: "CompIntensive(X)", description: "bulk computation over long lists of values" },
    TaxonomyRow { category: Category::Scientific, subtype: Subtype::Predict, signature: "Predict(x1, ..., xn)", description: "forecast the next value of a series" },
    TaxonomyRow { category: Category::Scientific, subtype: Subtype::Statistic, signature: "Statistic(x1, ..., xn)", description: "mean, median, variance, standard deviation" },
    TaxonomyRow { category: Category::Scientific, subtype: Subtype::Correlate, signature: "Correlate(X, Y)", description: "correlation between two series" },
];

impl Category {
    pub const ALL: [Category; 4] = [Category::Element, Category::Set, Category::Temporal, Category::Scientific];

    fn aliases(self) -> &'static [&'static str] {
        match self {
            Category::Element => &["element", "element-wise", "element operations", "element-wise operations", "elements"],
            Category::Set => &["set", "set operations", "list/set-wise", "list/set-wise operations", "set-wise", "element-set", "element-set operations", "sets"],
            Category::Temporal => &["temporal", "temporal reasoning", "time"],
            Category::Scientific => &["scientific", "science analysis", "scientific analysis", "science analysis operations", "science"],
        }
    }

    fn resolve(s: &str) -> Option<Self> {
        let key = s.trim().to_lowercase();
        Self::ALL.into_iter().find(|c| c.aliases().contains(&key.as_str()))
    }
}

impl Subtype {
    pub const ALL: [Subtype; 12] = [
        Subtype::Retrieve,
        Subtype::Inverse,
        Subtype::Math,
        Subtype::Filter,
        Subtype::Existence,
        Subtype::Compose,
        Subtype::Change,
        Subtype::TempCalc,
        Subtype::CompIntensive,
        Subtype::Predict,
        Subtype::Statistic,
        Subtype::Correlate,
    ];

    pub fn category(self) -> Category {
        TAXONOMY.iter().find(|r| r.subtype == self).map(|r| r.category).unwrap_or(Category::Element)
    }

    fn aliases(self) -> &'static [&'static str] {
        match self {
            Subtype::Retrieve => &["retrieve", "retrieval"],
            Subtype::Inverse => &["inverse", "inverse question"],
            Subtype::Math => &["math", "calculation", "arithmetic"],
            Subtype::Filter => &["filter", "filtering", "sorting", "top-k"],
            Subtype::Existence => &["existence", "membership", "counting"],
            Subtype::Compose => &["compose", "composition", "sets composition", "set composition"],
            Subtype::Change => &["change", "growth", "growth rate"],
            Subtype::TempCalc => &["tempcalc", "temporal calculation", "duration"],
            Subtype::CompIntensive => &["compintensive", "computation intensive", "general computation intensive tasks", "batch data processing"],
            Subtype::Predict => &["predict", "prediction", "trend forecasting", "forecasting"],
            Subtype::Statistic => &["statistic", "statistics", "statistical analysis"],
            Subtype::Correlate => &["correlate", "correlation", "correlation analysis"],
        }
    }

    fn resolve(category: Category, s: &str) -> Option<Self> {
        let key = s.trim().to_lowercase();
        Self::ALL
            .into_iter()
            .filter(|t| t.category() == category)
            .find(|t| t.aliases().contains(&key.as_str()))
    }

    pub fn name(self) -> &'static str {
        match self {
            Subtype::Retrieve => "Retrieve",
            Subtype::Inverse => "Inverse",
            Subtype::Math => "Math",
            Subtype::Filter => "Filter",
            Subtype::Existence => "Existence",
            Subtype::Compose => "Compose",
            Subtype::Change => "Change",
            Subtype::TempCalc => "TempCalc",
            Subtype::CompIntensive => "CompIntensive",
            Subtype::Predict => "Predict",
            Subtype::Statistic => "Statistic",
            Subtype::Correlate => "Correlate",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaxonomyLabel {
    pub category: Category,
    pub subtype: Subtype,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("invalid taxonomy label: {0}")]
    InvalidLabel(String),
    #[error("histogram is missing subtype {0}")]
    MissingSubtype(Subtype),
}

impl TaxonomyLabel {
    pub fn new(subtype: Subtype) -> Self {
        Self {
            category: subtype.category(),
            subtype,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        let d = detail.into();
        self.detail = (!d.trim().is_empty()).then(|| d.trim().to_string());
        self
    }
}

impl fmt::Display for TaxonomyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.category, self.subtype)?;
        if let Some(d) = &self.detail {
            write!(f, "->{d}")?;
        }
        Ok(())
    }
}

impl FromStr for TaxonomyLabel {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        validate_label(s)
    }
}

impl Serialize for TaxonomyLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TaxonomyLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        validate_label(&s).map_err(serde::de::Error::custom)
    }
}

fn detail_of(parts: &[&str]) -> Option<String> {
    let d = parts.iter().map(|p| p.trim()).filter(|p| !p.is_empty()).collect::<Vec<_>>().join("->");
    (!d.is_empty()).then_some(d)
}

/// Parses `Category->Subtype[->detail]`. Category and subtype are matched
/// case-insensitively, including their common spelled-out names.
pub fn validate_label(path: &str) -> Result<TaxonomyLabel, TaxonomyError> {
    let parts: Vec<&str> = path.split("->").collect();
    let invalid = || TaxonomyError::InvalidLabel(path.to_string());
    if parts.len() < 2 {
        return Err(invalid());
    }
    let category = Category::resolve(parts[0]).ok_or_else(invalid)?;
    let subtype = Subtype::resolve(category, parts[1]).ok_or_else(invalid)?;
    Ok(TaxonomyLabel {
        category,
        subtype,
        detail: detail_of(&parts[2..]),
    })
}

/// Lenient form of [`validate_label`] for model output. A known category
/// whose second segment is not a subtype is searched for a subtype name in
/// later segments; scientific paths with none fall back to CompIntensive.
/// Unused segments are kept as the detail.
pub fn canonicalize_label(path: &str) -> Result<TaxonomyLabel, TaxonomyError> {
    if let Ok(l) = validate_label(path) {
        return Ok(l);
    }
    let parts: Vec<&str> = path.split("->").collect();
    let invalid = || TaxonomyError::InvalidLabel(path.to_string());
    let category = parts.first().and_then(|p| Category::resolve(p)).ok_or_else(invalid)?;
    let rest = &parts[1..];
    if let Some((i, subtype)) = rest
        .iter()
        .enumerate()
        .find_map(|(i, p)| Subtype::resolve(category, p).map(|s| (i, s)))
    {
        let others: Vec<&str> = rest.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).collect();
        return Ok(TaxonomyLabel {
            category,
            subtype,
            detail: detail_of(&others),
        });
    }
    if category == Category::Scientific && !rest.is_empty() {
        return Ok(TaxonomyLabel {
            category,
            subtype: Subtype::CompIntensive,
            detail: detail_of(rest),
        });
    }
    Err(invalid())
}

/// The taxonomy as prompt text.
pub fn render_taxonomy() -> String {
    let mut out = String::new();
    for cat in Category::ALL {
        out.push_str(&format!("{cat}\n"));
        for row in TAXONOMY.iter().filter(|r| r.category == cat) {
            out.push_str(&format!("  {cat}->{} : {} {}\n", row.subtype, row.signature, row.description));
        }
    }
    out
}

/// Weight of each subtype proportional to 1/(count + 1), summing to 1.
pub fn rarity_weights(histogram: &BTreeMap<Subtype, u64>) -> Result<BTreeMap<Subtype, f64>, TaxonomyError> {
    let mut raw = BTreeMap::new();
    for s in Subtype::ALL {
        let c = *histogram.get(&s).ok_or(TaxonomyError::MissingSubtype(s))?;
        raw.insert(s, 1.0 / (c as f64 + 1.0));
    }
    let total: f64 = raw.values().sum();
    Ok(raw.into_iter().map(|(k, v)| (k, v / total)).collect())
}

/// Per-subtype counts with every subtype present.
pub fn histogram<'a>(labels: impl IntoIterator<Item = &'a TaxonomyLabel>) -> BTreeMap<Subtype, u64> {
    let mut h: BTreeMap<Subtype, u64> = Subtype::ALL.into_iter().map(|s| (s, 0)).collect();
    for l in labels {
        *h.entry(l.subtype).or_default() += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub labels: Vec<TaxonomyLabel>,
    pub warnings: usize,
}

pub const EXTRACTOR_TAG: &str = "extractor";

pub fn extraction_prompt(question: &str) -> (String, String) {
    let system = format!(
        "You classify the aggregation steps a question requires. Use this taxonomy:\n{}\n\
         Answer with one label per line in the form Category->Subtype->operation, where operation names the concrete step \
         (for example Scientific->Statistic->standard deviation). Output nothing else.",
        render_taxonomy()
    );
    (system, format!("Question: {question}"))
}

/// Reads label paths from a model reply: one per line, or a JSON list.
pub fn parse_label_lines(text: &str) -> Extraction {
    let candidates: Vec<String> = match serde_json::from_str::<serde_json::Value>(text.trim()) {
        Ok(serde_json::Value::Array(items)) => items.iter().filter_map(|v| v.as_str().map(str::to_owned)).collect(),
        _ => text
            .lines()
            .map(|l| {
                l.trim()
                    .trim_start_matches(|c: char| c == '-' || c == '*' || c == '•' || c.is_ascii_digit() || c == '.' || c == ')')
                    .trim()
                    .trim_matches(|c| c == '"' || c == '`' || c == ',')
                    .to_string()
            })
            .filter(|l| !l.is_empty())
            .collect(),
    };
    let mut labels = Vec::new();
    let mut warnings = 0;
    for c in candidates {
        match canonicalize_label(&c) {
            Ok(l) if !labels.contains(&l) => labels.push(l),
            Ok(_) => {}
            Err(_) => {
                log::warn!("dropping invalid taxonomy label {c:?}");
                warnings += 1;
            }
        }
    }
    Extraction { labels, warnings }
}

pub fn extract_operations(question: &str, gateway: &Gateway) -> Result<Extraction, GatewayError> {
    let (system, user) = extraction_prompt(question);
    let reply = gateway.ask(EXTRACTOR_TAG, 0.0, &system, &user)?;
    Ok(parse_label_lines(&reply.text))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::gateway::{make_scripted_backend, Matcher, ResponseScript, RetryPolicy, ScriptEntry};

    #[test]
    fn canonical_labels() {
        let l = validate_label("Scientific->Statistic->standard deviation").unwrap();
        assert_eq!((l.category, l.subtype), (Category::Scientific, Subtype::Statistic));
        assert_eq!(l.detail.as_deref(), Some("standard deviation"));
        assert!(validate_label("Set->Compose").is_ok());
        assert!(validate_label("set->COMPOSE").is_ok());
        assert!(matches!(validate_label("Element->Fly"), Err(TaxonomyError::InvalidLabel(_))));
        assert!(validate_label("Element").is_err());
    }

    #[test]
    fn exactly_twelve_pairs() {
        let mut accepted = 0;
        for c in Category::ALL {
            for s in Subtype::ALL {
                if validate_label(&format!("{c}->{s}")).is_ok() {
                    accepted += 1;
                    assert_eq!(s.category(), c);
                }
            }
        }
        assert_eq!(accepted, 12);
    }

    #[test]
    fn spelled_out_paths_canonicalize() {
        let l = canonicalize_label("Science Analysis Operations->Informations search->XLSX Processing of sales").unwrap();
        assert_eq!(l.subtype, Subtype::CompIntensive);
        assert_eq!(l.detail.as_deref(), Some("Informations search->XLSX Processing of sales"));
        let l = canonicalize_label("Element-wise->Math->Addition").unwrap();
        assert_eq!(l.to_string(), "Element->Math->Addition");
        assert!(canonicalize_label("Cooking->Boil").is_err());
    }

    #[test]
    fn display_round_trips() {
        for row in &TAXONOMY {
            let l = TaxonomyLabel::new(row.subtype).with_detail("x->y");
            assert_eq!(validate_label(&l.to_string()).unwrap(), l);
        }
    }

    #[test]
    fn uniform_and_skewed_weights() {
        let uniform: BTreeMap<_, _> = Subtype::ALL.into_iter().map(|s| (s, 5)).collect();
        for w in rarity_weights(&uniform).unwrap().values() {
            assert!((w - 1.0 / 12.0).abs() < 1e-15);
        }
        let mut skew: BTreeMap<_, _> = Subtype::ALL.into_iter().map(|s| (s, 9)).collect();
        skew.insert(Subtype::Predict, 0);
        let w = rarity_weights(&skew).unwrap();
        assert!((w[&Subtype::Predict] / w[&Subtype::Math] - 10.0).abs() < 1e-9);
        skew.remove(&Subtype::Math);
        assert_eq!(rarity_weights(&skew), Err(TaxonomyError::MissingSubtype(Subtype::Math)));
    }

    proptest! {
        #[test]
        fn weights_are_distribution_and_antitone(counts in proptest::collection::vec(0u64..1000, 12)) {
            let h: BTreeMap<_, _> = Subtype::ALL.into_iter().zip(counts.iter().copied()).collect();
            let w = rarity_weights(&h).unwrap();
            let total: f64 = w.values().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for a in Subtype::ALL {
                for b in Subtype::ALL {
                    if h[&a] < h[&b] {
                        prop_assert!(w[&a] > w[&b]);
                    }
                }
            }
        }
    }

    fn gateway(reply: &str) -> Gateway {
        let backend = make_scripted_backend(
            ResponseScript::new(vec![ScriptEntry::reply(Matcher::Any, reply)]).repeat_last(),
        )
        .unwrap();
        Gateway::new(Arc::new(backend), RetryPolicy::immediate(1))
    }

    #[test]
    fn extraction_filters_invalid() {
        let gw = gateway("Scientific->Correlate->pearson\nCooking->Boil");
        let q = "Between the 2012 and 2022 seasons, what is the Pearson correlation coefficient between points and wins?";
        let e = extract_operations(q, &gw).unwrap();
        assert_eq!(e.labels.len(), 1);
        assert_eq!(e.labels[0].subtype, Subtype::Correlate);
        assert_eq!(e.warnings, 1);
        assert_eq!(extract_operations(q, &gw).unwrap(), e);
    }

    #[test]
    fn json_list_accepted() {
        let e = parse_label_lines(r#"["Set->Filter->top-3", "Temporal->TempCalc"]"#);
        assert_eq!(e.labels.len(), 2);
    }
}
