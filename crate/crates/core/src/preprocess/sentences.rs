const BOUNDARY: &[char] = &['.', ':', ';', '?', '!'];
const CLOSERS: &[char] = &[')', ']', '"', '\'', '\u{201d}', '\u{2019}'];
const BULLETS: &[char] = &[
    '\u{2022}', '\u{25cf}', '\u{25aa}', '\u{25e6}', '\u{00b7}', '\u{2023}', '*', '-', '\u{2013}',
    '\u{2014}',
];
const ABBREVIATIONS: &[&str] = &[
    "art", "no", "nr", "e.g", "i.e", "cf", "para", "sec", "vs", "viz",
];

/// Splits text into trimmed, non-empty segments.
///
/// Segments end after `.`, `:`, `;`, `?` or `!` when followed by whitespace
/// or end of text (closing quotes and brackets stay with the left segment).
/// A line starting with a bullet or enumeration marker starts a new segment.
/// A period does not end a segment after a known abbreviation (`Art.`,
/// `No.`, `e.g.`, `i.e.`, ...), after a leading enumerator (`1.`), or after a
/// single uppercase initial that follows a capitalized word (`John F. Smith`).
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut segments = Vec::new();
    let mut seg_start = 0usize;
    let push = |from: usize, to: usize, segments: &mut Vec<String>| {
        let s = text[from..to].trim();
        if !s.is_empty() {
            segments.push(s.to_string());
        }
    };

    let mut i = 0;
    let mut line_start = true;
    while i < chars.len() {
        let (b, c) = chars[i];
        if line_start {
            let mut j = i;
            while j < chars.len() && chars[j].1.is_whitespace() && chars[j].1 != '\n' {
                j += 1;
            }
            if bullet_marker_len(&chars[j..]).is_some() {
                let pending = &text[seg_start..byte_at(j)];
                if !pending.trim().is_empty() {
                    push(seg_start, byte_at(j), &mut segments);
                    seg_start = byte_at(j);
                }
            }
            line_start = false;
        }
        if c == '\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if BOUNDARY.contains(&c) {
            let mut j = i + 1;
            while j < chars.len()
                && (BOUNDARY.contains(&chars[j].1) || CLOSERS.contains(&chars[j].1))
            {
                j += 1;
            }
            let at_break = j == chars.len() || chars[j].1.is_whitespace();
            if at_break && !(c == '.' && j == i + 1 && period_guarded(&text[seg_start..b])) {
                push(seg_start, byte_at(j), &mut segments);
                seg_start = byte_at(j);
            }
            i = j;
            continue;
        }
        i += 1;
    }
    push(seg_start, text.len(), &mut segments);
    segments
}

/// Length in chars of a list marker at the start of `chars` followed by
/// whitespace: a bullet glyph, `(a)`, `a)` or `(iv)`.
fn bullet_marker_len(chars: &[(usize, char)]) -> Option<usize> {
    let ws_after = |n: usize| chars.get(n).is_some_and(|&(_, c)| c.is_whitespace());
    let first = chars.first()?.1;
    if BULLETS.contains(&first) && ws_after(1) {
        return Some(1);
    }
    let open = usize::from(first == '(');
    let body = chars[open..]
        .iter()
        .take_while(|&&(_, c)| c.is_alphanumeric())
        .count();
    if (1..=4).contains(&body)
        && chars.get(open + body).is_some_and(|&(_, c)| c == ')')
        && ws_after(open + body + 1)
    {
        return Some(open + body + 1);
    }
    None
}

fn period_guarded(segment_before: &str) -> bool {
    let words: Vec<&str> = segment_before.split_whitespace().collect();
    let Some(last) = words.last() else {
        return false;
    };
    let word = last.trim_start_matches(['(', '[', '"', '\'', '\u{201c}']);
    if ABBREVIATIONS.contains(&word.to_lowercase().as_str()) {
        return true;
    }
    if words.len() == 1 && !word.is_empty() && word.chars().all(|c| c.is_ascii_digit()) {
        return true;
    }
    let mut cs = word.chars();
    if let (Some(c), None) = (cs.next(), cs.next()) {
        if c.is_uppercase() && words.len() >= 2 {
            return words[words.len() - 2]
                .chars()
                .next()
                .is_some_and(char::is_uppercase);
        }
    }
    false
}
