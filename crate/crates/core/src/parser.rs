//! Regex-based extraction of headed sections and decision tokens from judge
//! completions.
//!
//! A section header is a line of the form
//!
//! ```text
//! [#|*]* <Rubric|Reasoning|Judgement|Judgment> [*]* (':' | end of line)
//! ```
//!
//! matched case-insensitively. Text after a colon on the header line belongs to
//! the section. Text before the first header is kept as a preamble.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::records::JudgmentLabel;

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?im)^[ \t]*[#*]*[ \t]*(rubric|reasoning|judge?ment)[ \t]*\**[ \t]*(?::[ \t]*\**[ \t]*|[ \t]*$)",
    )
    .expect("header regex")
});

static DECISION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(a_win|b_win|tie)\b").expect("decision regex"));

static LENIENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:answer[ \t]+)?([ab])$").expect("lenient regex")
});

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?\d+(?:\.\d+)?").expect("number regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionKind {
    Preamble,
    Rubric,
    Reasoning,
    Judgement,
}

impl SectionKind {
    fn from_header(name: &str) -> Self {
        match name.to_ascii_lowercase().as_str() {
            "rubric" => SectionKind::Rubric,
            "reasoning" => SectionKind::Reasoning,
            _ => SectionKind::Judgement,
        }
    }
}

/// Byte range of a section body inside the completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Sections found in a completion, in document order. When a header repeats,
/// the last occurrence is the one returned by [`Sections::get`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sections<'a> {
    text: &'a str,
    entries: Vec<(SectionKind, Span)>,
}

impl<'a> Sections<'a> {
    pub fn get(&self, kind: SectionKind) -> Option<&'a str> {
        self.span(kind).map(|s| &self.text[s.start..s.end])
    }

    pub fn span(&self, kind: SectionKind) -> Option<Span> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| *k == kind)
            .map(|(_, s)| *s)
    }

    /// Headed sections only (no preamble), each kind once, in document order.
    pub fn headed(&self) -> Vec<(SectionKind, &'a str)> {
        let mut out: Vec<(SectionKind, Span)> = Vec::new();
        for kind in [SectionKind::Rubric, SectionKind::Reasoning, SectionKind::Judgement] {
            if let Some(span) = self.span(kind) {
                out.push((kind, span));
            }
        }
        out.sort_by_key(|(_, s)| s.start);
        out.into_iter()
            .map(|(k, s)| (k, &self.text[s.start..s.end]))
            .collect()
    }

    pub fn preamble(&self) -> Option<&'a str> {
        self.get(SectionKind::Preamble)
    }

    /// All spans including repeats, in document order.
    pub fn spans(&self) -> &[(SectionKind, Span)] {
        &self.entries
    }
}

pub fn extract_sections(completion: &str) -> Sections<'_> {
    let mut entries = Vec::new();
    let headers: Vec<_> = HEADER.captures_iter(completion).collect();
    let first = headers.first().map_or(completion.len(), |c| c.get(0).unwrap().start());
    entries.push((SectionKind::Preamble, Span { start: 0, end: first }));
    for (i, cap) in headers.iter().enumerate() {
        let whole = cap.get(0).unwrap();
        let kind = SectionKind::from_header(cap.get(1).unwrap().as_str());
        let end = headers
            .get(i + 1)
            .map_or(completion.len(), |c| c.get(0).unwrap().start());
        entries.push((kind, Span { start: whole.end(), end }));
    }
    Sections {
        text: completion,
        entries,
    }
}

/// Where the decision is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractMode {
    /// Structured output; only the Judgement section is consulted.
    #[default]
    Full,
    /// Decision-only output; the whole completion is the decision field.
    Fast,
}

impl std::str::FromStr for ExtractMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(ExtractMode::Full),
            "fast" => Ok(ExtractMode::Fast),
            other => Err(format!("unknown mode {other:?} (expected full|fast)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub mode: ExtractMode,
    /// Canonical tokens only; when false, `Answer A`, `A`, etc. are accepted
    /// as the sole content of the decision field.
    pub strict: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            mode: ExtractMode::Full,
            strict: true,
        }
    }
}

impl ParseOptions {
    pub fn fast() -> Self {
        ParseOptions {
            mode: ExtractMode::Fast,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    MissingJudgementSection,
    NoDecisionToken,
    ConflictingTokens(Vec<JudgmentLabel>),
    NoInteger,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseFailure::MissingJudgementSection => f.write_str("no Judgement section"),
            ParseFailure::NoDecisionToken => f.write_str("no decision token"),
            ParseFailure::ConflictingTokens(ls) => {
                let names: Vec<_> = ls.iter().map(|l| l.as_str()).collect();
                write!(f, "conflicting decision tokens: {}", names.join(", "))
            }
            ParseFailure::NoInteger => f.write_str("no integer token"),
        }
    }
}

impl std::error::Error for ParseFailure {}

pub fn extract_judgment(completion: &str, opts: ParseOptions) -> Result<JudgmentLabel, ParseFailure> {
    let field = match opts.mode {
        ExtractMode::Fast => completion,
        ExtractMode::Full => extract_sections(completion)
            .get(SectionKind::Judgement)
            .ok_or(ParseFailure::MissingJudgementSection)?,
    };
    decision_in(field, opts.strict)
}

fn decision_in(field: &str, strict: bool) -> Result<JudgmentLabel, ParseFailure> {
    let mut found: Vec<JudgmentLabel> = Vec::new();
    for m in DECISION.find_iter(field) {
        let label: JudgmentLabel = m.as_str().parse().expect("regex only matches canonical tokens");
        if !found.contains(&label) {
            found.push(label);
        }
    }
    match found.len() {
        1 => return Ok(found[0]),
        0 => {}
        _ => {
            found.sort();
            return Err(ParseFailure::ConflictingTokens(found));
        }
    }
    if !strict {
        let bare = field.trim().trim_matches(|c: char| "*_`.!\"'".contains(c)).trim();
        if let Some(cap) = LENIENT.captures(bare) {
            return Ok(match cap[1].to_ascii_lowercase().as_str() {
                "a" => JudgmentLabel::AWin,
                _ => JudgmentLabel::BWin,
            });
        }
    }
    Err(ParseFailure::NoDecisionToken)
}

/// `Int(c)`: in Full mode, the first standalone integer in the text; in Fast
/// mode, the whole trimmed text must be an integer. Values beyond `i64`
/// saturate.
pub fn extract_point_score(completion: &str, mode: ExtractMode) -> Result<i64, ParseFailure> {
    match mode {
        ExtractMode::Fast => parse_integer(completion.trim()).ok_or(ParseFailure::NoInteger),
        ExtractMode::Full => {
            for m in NUMBER.find_iter(completion) {
                let before = completion[..m.start()].chars().next_back();
                let after = completion[m.end()..].chars().next();
                let glued = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
                // decimals are not integer tokens; "8." at a sentence end is
                if glued(before) || glued(after) || before == Some('.') || m.as_str().contains('.') {
                    continue;
                }
                if let Some(v) = parse_integer(m.as_str()) {
                    return Ok(v);
                }
            }
            Err(ParseFailure::NoInteger)
        }
    }
}

fn parse_integer(s: &str) -> Option<i64> {
    let (neg, digits) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(match digits.parse::<i64>() {
        Ok(v) if neg => -v,
        Ok(v) => v,
        Err(_) if neg => i64::MIN,
        Err(_) => i64::MAX,
    })
}

/// Result of a single parse call: sections plus whichever decision the
/// caller asked for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedJudgment<'a> {
    pub sections: Sections<'a>,
    pub label: Option<JudgmentLabel>,
    pub point_score: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    Label,
    PointScore,
}

pub fn parse_judgment(completion: &str, want: DecisionKind, opts: ParseOptions) -> ParsedJudgment<'_> {
    let sections = extract_sections(completion);
    let (label, point_score) = match want {
        DecisionKind::Label => (extract_judgment(completion, opts).ok(), None),
        DecisionKind::PointScore => (None, extract_point_score(completion, opts.mode).ok()),
    };
    ParsedJudgment {
        sections,
        label,
        point_score,
    }
}

/// Canonical structured completion for a pairwise decision.
pub fn render_full(label: JudgmentLabel) -> String {
    format!("### Judgement\n{}", label.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FULL: ParseOptions = ParseOptions {
        mode: ExtractMode::Full,
        strict: true,
    };

    #[test]
    fn three_headers_in_order() {
        let text = "intro\n### Rubric\nbe fair\n### Reasoning\nA is better\n### Judgement\nA_win\n";
        let s = extract_sections(text);
        let headed = s.headed();
        assert_eq!(
            headed.iter().map(|(k, _)| *k).collect::<Vec<_>>(),
            vec![SectionKind::Rubric, SectionKind::Reasoning, SectionKind::Judgement]
        );
        assert_eq!(headed[0].1.trim(), "be fair");
        assert_eq!(s.preamble(), Some("intro\n"));
    }

    #[test]
    fn no_headers_gives_preamble_only() {
        let s = extract_sections("just words");
        assert!(s.headed().is_empty());
        assert_eq!(s.preamble(), Some("just words"));
    }

    #[test]
    fn header_layouts() {
        let cases = [
            ("Judgement: B_win", Some(JudgmentLabel::BWin)),
            ("**Judgement:** tie", Some(JudgmentLabel::Tie)),
            ("**Judgment**: A_win", Some(JudgmentLabel::AWin)),
            ("## JUDGEMENT\n\nb_win", Some(JudgmentLabel::BWin)),
            ("* judgement\nA_win", Some(JudgmentLabel::AWin)),
            // not a header: words after the name without a colon
            ("Judgement is hard. A_win", None),
        ];
        for (text, want) in cases {
            assert_eq!(extract_judgment(text, FULL).ok(), want, "{text:?}");
        }
    }

    #[test]
    fn duplicate_judgement_last_wins() {
        let layouts = [
            "### Judgement\nA_win\n### Judgement\nB_win",
            "### Judgement\nA_win\n### Reasoning\nwait\n### Judgement\nB_win",
            "Judgement: A_win\nReasoning: reconsidered\nJudgement: B_win\n",
        ];
        for text in layouts {
            assert_eq!(extract_judgment(text, FULL), Ok(JudgmentLabel::BWin), "{text:?}");
        }
        let s = extract_sections(layouts[1]);
        assert_eq!(s.spans().len(), 4);
        assert_eq!(s.get(SectionKind::Judgement).map(str::trim), Some("B_win"));
    }

    #[test]
    fn judgment_examples() {
        assert_eq!(
            extract_judgment("reasoning...\n### Judgement\nA_win", FULL),
            Ok(JudgmentLabel::AWin)
        );
        assert_eq!(extract_judgment("tie", ParseOptions::fast()), Ok(JudgmentLabel::Tie));
        assert_eq!(
            extract_judgment("...\n### Judgement\nA_win or B_win", FULL),
            Err(ParseFailure::ConflictingTokens(vec![JudgmentLabel::AWin, JudgmentLabel::BWin]))
        );
    }

    #[test]
    fn ambiguous_strings_fail() {
        for text in [
            "### Judgement\nA_win, no wait, tie",
            "### Judgement\nB_win\nTIE",
            "### Judgement\n",
            "### Judgement\nA_winner",
            "### Judgement\nnone of them",
            "A_win",
        ] {
            assert!(extract_judgment(text, FULL).is_err(), "{text:?}");
        }
        // a repeated identical token is not a conflict
        assert_eq!(extract_judgment("### Judgement\nA_win (A_win)", FULL), Ok(JudgmentLabel::AWin));
    }

    #[test]
    fn missing_section_in_full_mode() {
        assert_eq!(
            extract_judgment("A_win", FULL),
            Err(ParseFailure::MissingJudgementSection)
        );
    }

    #[test]
    fn lenient_surface_forms() {
        let lenient = ParseOptions {
            strict: false,
            ..FULL
        };
        for (text, want) in [
            ("### Judgement\nAnswer A", JudgmentLabel::AWin),
            ("### Judgement\n**B**", JudgmentLabel::BWin),
            ("### Judgement\nanswer b.", JudgmentLabel::BWin),
        ] {
            assert_eq!(extract_judgment(text, lenient), Ok(want));
            assert!(extract_judgment(text, FULL).is_err());
        }
        // not the sole content
        assert!(extract_judgment("### Judgement\nI pick A", lenient).is_err());
    }

    #[test]
    fn point_score_phrasings() {
        let corpus = [
            ("7", Some(7)),
            ("Score: 7/10", Some(7)),
            ("I'd give it 8.", Some(8)),
            ("rating -3", Some(-3)),
            ("7.5 then 6", Some(6)),
            ("v2 is 9", Some(9)),
            ("(4) out of 5", Some(4)),
            ("excellent", None),
            ("abc123", None),
        ];
        for (text, want) in corpus {
            assert_eq!(extract_point_score(text, ExtractMode::Full).ok(), want, "{text:?}");
        }
        assert_eq!(extract_point_score(" 7\n", ExtractMode::Fast), Ok(7));
        assert!(extract_point_score("Score: 7", ExtractMode::Fast).is_err());
        assert_eq!(
            extract_point_score("99999999999999999999999", ExtractMode::Fast),
            Ok(i64::MAX)
        );
    }

    #[test]
    fn parse_judgment_returns_one_decision() {
        let p = parse_judgment("### Judgement\nA_win", DecisionKind::Label, FULL);
        assert_eq!(p.label, Some(JudgmentLabel::AWin));
        assert_eq!(p.point_score, None);
        let p = parse_judgment("Score 6", DecisionKind::PointScore, FULL);
        assert_eq!(p.label, None);
        assert_eq!(p.point_score, Some(6));
    }

    #[test]
    fn render_round_trips() {
        for l in JudgmentLabel::ALL {
            assert_eq!(extract_judgment(&render_full(l), FULL), Ok(l));
        }
    }

    proptest! {
        #[test]
        fn never_panics_and_is_deterministic(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let text = String::from_utf8_lossy(&bytes);
            for opts in [FULL, ParseOptions::fast(), ParseOptions { strict: false, ..FULL }] {
                let a = extract_judgment(&text, opts);
                let b = extract_judgment(&text, opts);
                prop_assert_eq!(a, b);
            }
            let _ = extract_point_score(&text, ExtractMode::Full);
            let _ = extract_point_score(&text, ExtractMode::Fast);
        }

        #[test]
        fn decoys_in_reasoning_are_ignored(
            decoys in proptest::collection::vec(prop_oneof![Just("A_win"), Just("B_win"), Just("tie")], 0..6),
            gold in 0usize..3,
        ) {
            let label = JudgmentLabel::ALL[gold];
            let text = format!(
                "### Rubric\nprefer tie-breaking on {}\n### Reasoning\n{}\n### Judgement\n{}\n",
                decoys.join(" "),
                decoys.join(" then "),
                label
            );
            prop_assert_eq!(extract_judgment(&text, FULL), Ok(label));
        }

        #[test]
        fn spans_are_ordered_and_disjoint(text in "(intro\n)?((### )?(Rubric|Reasoning|Judgement)(:| )?\n[a-z_ ]{0,10}\n){0,6}") {
            let s = extract_sections(&text);
            let spans = s.spans();
            for w in spans.windows(2) {
                prop_assert!(w[0].1.end <= w[1].1.start);
                prop_assert!(w[0].1.start <= w[0].1.end);
            }
        }
    }
}
