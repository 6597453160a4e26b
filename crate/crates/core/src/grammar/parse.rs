use super::{Grammar, GrammarError, RawRule};

/// Whitespace-separated words with their 1-based character column.
pub(crate) fn words(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut col = 0;
    let mut start_col = 0;
    for (byte, ch) in line.char_indices() {
        col += 1;
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((start_col, &line[s..byte]));
            }
        } else if start.is_none() {
            start = Some(byte);
            start_col = col;
        }
    }
    if let Some(s) = start {
        out.push((start_col, &line[s..]));
    }
    out
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Parses the native format: one `<probability> <LHS> -> <sym> ...` rule per
/// line, `#` comments, and an optional `start: <sym>` header.
///
/// The result is not validated; see [`Grammar::validated`].
pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let mut start = None;
    let mut raw = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let body = strip_comment(line);
        let w = words(body);
        if w.is_empty() {
            continue;
        }
        let syntax = |column: usize, message: String| GrammarError::Syntax {
            line: line_no,
            column,
            message,
        };
        if let Some(rest) = w[0].1.strip_prefix("start:") {
            if start.is_some() {
                return Err(syntax(w[0].0, "repeated `start:` header".into()));
            }
            let sym = match (rest.is_empty(), w.len()) {
                (true, 2) => w[1].1,
                (false, 1) => rest,
                _ => return Err(syntax(w[0].0, "expected `start: <symbol>`".into())),
            };
            start = Some(sym.to_string());
            continue;
        }
        let (pcol, ptext) = w[0];
        let probability: f64 = ptext
            .parse()
            .map_err(|_| syntax(pcol, format!("expected a probability, found `{ptext}`")))?;
        if w.len() < 2 {
            return Err(syntax(
                pcol + ptext.chars().count(),
                "missing left-hand side".into(),
            ));
        }
        match w.get(2) {
            Some((_, "->")) => {}
            Some((c, t)) => return Err(syntax(*c, format!("expected `->`, found `{t}`"))),
            None => {
                let (c, t) = w[1];
                return Err(syntax(c + t.chars().count(), "expected `->`".into()));
            }
        }
        if w.len() < 4 {
            return Err(syntax(
                w[2].0 + 2,
                "empty right-hand side (epsilon rules are not supported)".into(),
            ));
        }
        if let Some((c, _)) = w[3..].iter().find(|(_, t)| *t == "->") {
            return Err(syntax(*c, "unexpected second `->`".into()));
        }
        raw.push(RawRule {
            line: line_no,
            column: pcol,
            probability,
            lhs: w[1].1.to_string(),
            rhs: w[3..].iter().map(|(_, t)| t.to_string()).collect(),
        });
    }
    Grammar::from_raw(start, raw)
}
