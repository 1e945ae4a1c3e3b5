//! Minimal INI reader: `[section]`, `key = value`, `#` or `;` comments.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

fn strip_comment(line: &str) -> &str {
    let cut = line
        .char_indices()
        .find(|&(i, c)| (c == '#' || c == ';') && (i == 0 || line[..i].ends_with(char::is_whitespace)))
        .map(|(i, _)| i)
        .unwrap_or(line.len());
    line[..cut].trim()
}

pub fn parse(text: &str) -> Result<Vec<Section>, ParseError> {
    let mut sections: Vec<Section> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = strip_comment(raw);
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ParseError { line, msg: format!("unterminated section header `{s}`") })?
                .trim();
            if name.is_empty() {
                return Err(ParseError { line, msg: "empty section name".into() });
            }
            if sections.iter().any(|x| x.name == name) {
                return Err(ParseError { line, msg: format!("section [{name}] appears twice") });
            }
            sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let (key, value) = s.split_once('=').ok_or_else(|| ParseError { line, msg: format!("expected `key = value`, got `{s}`") })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ParseError { line, msg: "empty key".into() });
        }
        let section = sections.last_mut().ok_or_else(|| ParseError { line, msg: format!("key `{key}` outside any section") })?;
        section.entries.push(Entry { key: key.to_string(), value: value.trim().to_string(), line });
    }
    Ok(sections)
}

/// Splits a comma list, dropping surrounding whitespace; empty input gives no items.
pub fn list(value: &str) -> Vec<&str> {
    if value.trim().is_empty() {
        return Vec::new();
    }
    value.split(',').map(str::trim).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_keys_and_comments() {
        let text = "# top\n[a]\nx = 1, 2 # trailing\n; other\n[b]\ny=z#not-a-comment\n";
        let s = parse(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].entries[0], Entry { key: "x".into(), value: "1, 2".into(), line: 3 });
        assert_eq!(s[1].entries[0].value, "z#not-a-comment");
        assert_eq!(list("1, 2 ,3"), vec!["1", "2", "3"]);
        assert!(list("  ").is_empty());
    }

    #[test]
    fn malformed_input() {
        assert_eq!(parse("x = 1").unwrap_err().line, 1);
        assert_eq!(parse("[a]\n[a]").unwrap_err().line, 2);
        assert!(parse("[a\n").is_err());
        assert!(parse("[a]\nnovalue\n").unwrap_err().msg.contains("key = value"));
    }
}
