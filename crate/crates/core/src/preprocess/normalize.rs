use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Processor,
    Controller,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Processor => "PROCESSOR",
            Role::Controller => "CONTROLLER",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PROCESSOR" => Ok(Role::Processor),
            "CONTROLLER" => Ok(Role::Controller),
            other => Err(Error::Validation(format!("unknown role {other:?}"))),
        }
    }
}

/// One alias: a phrase of words, each word literal with an optional
/// trailing `*` wildcard (`import*` matches `importer`, `importing`).
#[derive(Debug, Clone)]
pub struct AliasEntry {
    pub pattern: String,
    pub role: Role,
    matcher: Regex,
}

impl AliasEntry {
    pub fn new(pattern: &str, role: Role) -> Result<Self> {
        let pieces: Vec<&str> = pattern.split_whitespace().collect();
        if pieces.is_empty() {
            return Err(Error::Validation("empty alias pattern".into()));
        }
        let mut parts = Vec::with_capacity(pieces.len());
        for piece in &pieces {
            let (literal, wildcard) = match piece.strip_suffix('*') {
                Some(l) => (l, true),
                None => (*piece, false),
            };
            let bad = |why: &str| Error::Validation(format!("alias pattern {pattern:?}: {why}"));
            if literal.is_empty() {
                return Err(bad("a wildcard needs a literal prefix"));
            }
            if literal.contains('*') {
                return Err(bad("'*' is only allowed at the end of a word"));
            }
            let first_ok = literal.chars().next().is_some_and(char::is_alphanumeric);
            let last_ok = literal.chars().last().is_some_and(char::is_alphanumeric);
            if !first_ok || !last_ok {
                return Err(bad("words must start and end with a letter or digit"));
            }
            let lower = literal.to_lowercase();
            for role in ["processor", "controller"] {
                if lower.starts_with(role) || (wildcard && role.starts_with(&lower)) {
                    return Err(bad("may not match the role names PROCESSOR or CONTROLLER"));
                }
            }
            let mut re = regex::escape(literal);
            if wildcard {
                re.push_str(r"\w*");
            }
            parts.push(re);
        }
        let matcher = Regex::new(&format!(r"(?i)^(?:{})\b", parts.join(r"\s+")))
            .map_err(|e| Error::Validation(format!("alias pattern {pattern:?}: {e}")))?;
        Ok(AliasEntry {
            pattern: pieces.join(" "),
            role,
            matcher,
        })
    }

    fn match_len(&self, rest: &str) -> Option<usize> {
        self.matcher.find(rest).map(|m| m.end())
    }
}

#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    pub entries: Vec<AliasEntry>,
}

impl AliasTable {
    pub fn new(entries: Vec<AliasEntry>) -> Self {
        AliasTable { entries }
    }

    /// Parses `pattern<TAB>ROLE` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                message,
            };
            let (pattern, role) = line
                .rsplit_once('\t')
                .ok_or_else(|| err("expected pattern<TAB>role".into()))?;
            let role: Role = role.parse().map_err(|e: Error| err(e.to_string()))?;
            entries.push(AliasEntry::new(pattern, role).map_err(|e| err(e.to_string()))?);
        }
        Ok(AliasTable { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.pattern, e.role))
            .collect()
    }
}

/// One replacement, with its byte span in the input text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedAlias {
    pub pattern: String,
    pub role: Role,
    pub matched: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub text: String,
    pub applied: Vec<AppliedAlias>,
}

fn word_starts(text: &str) -> impl Iterator<Item = usize> + '_ {
    let mut prev_alnum = false;
    text.char_indices().filter_map(move |(b, c)| {
        let alnum = c.is_alphanumeric();
        let start = alnum && !prev_alnum;
        prev_alnum = alnum;
        start.then_some(b)
    })
}

/// Replaces party names with their role, scanning word starts left to right
/// and taking the longest case-insensitive alias match at each; matches never
/// overlap.
pub fn normalize(text: &str, aliases: &AliasTable) -> Normalized {
    let mut out = String::with_capacity(text.len());
    let mut applied = Vec::new();
    let mut copied = 0;
    for start in word_starts(text) {
        if start < copied {
            continue;
        }
        let rest = &text[start..];
        let best = aliases
            .entries
            .iter()
            .filter_map(|e| e.match_len(rest).map(|len| (len, e)))
            .fold(None::<(usize, &AliasEntry)>, |acc, cur| match acc {
                Some(a) if a.0 >= cur.0 => Some(a),
                _ => Some(cur),
            });
        if let Some((len, entry)) = best {
            out.push_str(&text[copied..start]);
            out.push_str(entry.role.as_str());
            applied.push(AppliedAlias {
                pattern: entry.pattern.clone(),
                role: entry.role,
                matched: text[start..start + len].to_string(),
                start,
                end: start + len,
            });
            copied = start + len;
        }
    }
    out.push_str(&text[copied..]);
    Normalized { text: out, applied }
}

/// Runs of two or more capitalized words in normalized text, excluding the
/// role names: likely party names missing from the alias table.
pub fn review_candidates(normalized: &str) -> Vec<String> {
    let mut found: Vec<String> = Vec::new();
    let mut run: Vec<String> = Vec::new();
    let flush = |run: &mut Vec<String>, found: &mut Vec<String>| {
        if run.len() >= 2 {
            let phrase = run.join(" ");
            if !found.contains(&phrase) {
                found.push(phrase);
            }
        }
        run.clear();
    };
    for tok in tokenize(normalized) {
        let capitalized = tok.text.chars().next().is_some_and(char::is_uppercase);
        let is_role = tok.text == "PROCESSOR" || tok.text == "CONTROLLER";
        if tok.is_word() && capitalized && !is_role {
            run.push(tok.text);
        } else {
            flush(&mut run, &mut found);
        }
    }
    flush(&mut run, &mut found);
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(entries: &[(&str, Role)]) -> AliasTable {
        AliasTable::new(
            entries
                .iter()
                .map(|(p, r)| AliasEntry::new(p, *r).unwrap())
                .collect(),
        )
    }

    #[test]
    fn company_name() {
        let t = table(&[("Acme Corp", Role::Processor)]);
        let n = normalize("Acme Corp shall delete data", &t);
        assert_eq!(n.text, "PROCESSOR shall delete data");
        assert_eq!(n.applied[0].start, 0);
        assert_eq!(n.applied[0].end, 9);
    }

    #[test]
    fn generic_reference() {
        let t = table(&[("importer", Role::Processor)]);
        assert_eq!(
            normalize("the importer agrees", &t).text,
            "the PROCESSOR agrees"
        );
    }

    #[test]
    fn no_match_is_identity() {
        let t = table(&[("importer", Role::Processor)]);
        let n = normalize("nothing to see", &t);
        assert_eq!(n.text, "nothing to see");
        assert!(n.applied.is_empty());
    }

    #[test]
    fn case_insensitive_longest_first_and_bounded() {
        let t = table(&[
            ("data exporter", Role::Controller),
            ("exporter", Role::Processor),
            ("Acme", Role::Processor),
            ("Acme Cloud Services", Role::Processor),
        ]);
        let n = normalize("The DATA Exporter and acme cloud services, not Acmes.", &t);
        assert_eq!(n.text, "The CONTROLLER and PROCESSOR, not Acmes.");
        assert_eq!(n.applied.len(), 2);
        assert!(n.applied[0].end <= n.applied[1].start);
    }

    #[test]
    fn wildcard_suffix() {
        let t = table(&[("import*", Role::Processor)]);
        assert_eq!(
            normalize("importers and importing", &t).text,
            "PROCESSOR and PROCESSOR"
        );
    }

    #[test]
    fn role_names_cannot_be_patterns() {
        for p in [
            "processor",
            "Controller",
            "proc*",
            "processors",
            "processor-x",
            "*",
            "-x",
            "a*b",
        ] {
            assert!(AliasEntry::new(p, Role::Processor).is_err(), "{p}");
        }
        assert!(AliasEntry::new("pro", Role::Processor).is_ok());
    }

    #[test]
    fn parse_table_file() {
        let t = AliasTable::parse(
            "# comment\nAcme Corp\tPROCESSOR\n\nBig Bank\tcontroller\n",
            "a",
        )
        .unwrap();
        assert_eq!(t.entries.len(), 2);
        assert_eq!(t.entries[1].role, Role::Controller);
        assert!(matches!(
            AliasTable::parse("Acme\tBOSS\n", "a"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            AliasTable::parse("Acme\n", "a"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn review_lists_capitalized_runs() {
        let t = table(&[("Acme Corp", Role::Processor)]);
        let n = normalize(
            "Acme Corp and Globex Holdings Ltd agree with PROCESSOR Team.",
            &t,
        );
        assert_eq!(review_candidates(&n.text), ["Globex Holdings Ltd"]);
    }

    proptest! {
        #[test]
        fn idempotent_with_disjoint_ordered_spans(
            words in proptest::collection::vec(
                prop_oneof![Just("a"), Just("b"), Just("x"), Just("acme"), Just("corp"), Just("Import"), Just("."), Just("-")],
                0..20)
        ) {
            let t = table(&[
                ("a b", Role::Processor), ("x a", Role::Controller), ("a a", Role::Processor),
                ("acme corp", Role::Processor), ("import*", Role::Controller), ("corp", Role::Controller),
            ]);
            let text = words.join(" ");
            let once = normalize(&text, &t);
            let twice = normalize(&once.text, &t);
            prop_assert_eq!(&twice.text, &once.text);
            prop_assert!(twice.applied.is_empty());
            for w in once.applied.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for a in &once.applied {
                prop_assert_eq!(&text[a.start..a.end], a.matched.as_str());
            }
        }
    }
}
