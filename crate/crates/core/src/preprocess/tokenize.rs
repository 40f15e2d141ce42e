use serde::{Deserialize, Serialize};

/// A token and its byte span `[start, end)` in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_word(&self) -> bool {
        self.text.chars().any(char::is_alphanumeric)
    }
}

fn joiner(c: char) -> bool {
    matches!(c, '-' | '_' | '\'' | '\u{2019}')
}

/// Splits `text` into word and punctuation tokens.
///
/// A word is a run of alphanumerics, optionally joined by `-`, `_` or an
/// apostrophe between alphanumerics (`data-set`, `controller's`), or by `.`/`,`
/// between digits (`28.3`). Every other non-whitespace character is a token of
/// its own. Whitespace only separates.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if cj.is_alphanumeric() {
                    j += 1;
                    continue;
                }
                let next_alnum = chars.get(j + 1).is_some_and(|&(_, n)| n.is_alphanumeric());
                let prev_digit = chars[j - 1].1.is_ascii_digit();
                let next_digit = chars.get(j + 1).is_some_and(|&(_, n)| n.is_ascii_digit());
                if (joiner(cj) && next_alnum)
                    || (matches!(cj, '.' | ',') && prev_digit && next_digit)
                {
                    j += 2;
                    continue;
                }
                break;
            }
            tokens.push(Token {
                text: text[start..end_of(j)].to_string(),
                start,
                end: end_of(j),
            });
            i = j;
        } else {
            tokens.push(Token {
                text: c.to_string(),
                start,
                end: end_of(i + 1),
            });
            i += 1;
        }
    }
    tokens
}

/// Joins token texts with single spaces, except before closing punctuation
/// and after opening brackets.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for t in tokens {
        let t = t.as_ref();
        let attach_left = t.len() == 1 && ".,;:!?)]}%".contains(t);
        let after_open = prev.is_some_and(|p| matches!(p, "(" | "[" | "{"));
        if prev.is_some() && !attach_left && !after_open {
            out.push(' ');
        }
        out.push_str(t);
        prev = Some(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &str) -> Vec<String> {
        tokenize(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn simple_sentence() {
        assert_eq!(
            texts("The processor shall."),
            ["The", "processor", "shall", "."]
        );
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n").is_empty());
    }

    #[test]
    fn hyphen_and_brackets() {
        assert_eq!(texts("data-set (v2)."), ["data-set", "(", "v2", ")", "."]);
    }

    #[test]
    fn numbers_and_trailing_joiners() {
        assert_eq!(texts("Art. 28.3, a-"), ["Art", ".", "28.3", ",", "a", "-"]);
        assert_eq!(texts("controller's"), ["controller's"]);
        assert_eq!(texts("café 1,000"), ["café", "1,000"]);
    }

    #[test]
    fn detokenize_spacing() {
        assert_eq!(
            detokenize(&["the", "(", "PROCESSOR", ")", "shall", "."]),
            "the (PROCESSOR) shall."
        );
    }

    proptest! {
        #[test]
        fn spans_are_lossless(s in "[a-zA-Z0-9 .,;:()'\\-é\n]{0,60}") {
            let toks = tokenize(&s);
            let mut cursor = 0;
            for t in &toks {
                prop_assert!(t.start < t.end);
                prop_assert!(t.start >= cursor);
                prop_assert!(s[cursor..t.start].chars().all(char::is_whitespace));
                prop_assert_eq!(&s[t.start..t.end], t.text.as_str());
                cursor = t.end;
            }
            prop_assert!(s[cursor..].chars().all(char::is_whitespace));
        }

        #[test]
        fn tokens_are_fixed_points(s in "[a-zA-Z0-9 .,;:()'\\-]{0,60}") {
            for t in tokenize(&s) {
                let again = tokenize(&t.text);
                prop_assert_eq!(again.len(), 1);
                prop_assert_eq!(&again[0].text, &t.text);
            }
        }
    }
}
