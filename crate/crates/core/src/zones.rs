//! File classification, comment/string zones and function spans.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScrubError};
use crate::lang::{FunctionStyle, LangClass, LangMap, LexSpec};
use crate::repo::is_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FileClass {
    Code,
    Config,
    Doc,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ZoneKind {
    Comment,
    String,
}

/// `span` covers delimiters too; `content` is the part between them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Zone {
    pub kind: ZoneKind,
    pub span: Range<usize>,
    pub content: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionSpan {
    pub span: Range<usize>,
    pub line_count: usize,
}

pub fn classify_file(path: &str, content: &[u8]) -> FileClass {
    classify_file_with(LangMap::builtin(), path, content)
}

pub fn classify_file_with(map: &LangMap, path: &str, content: &[u8]) -> FileClass {
    if !is_text(content) {
        return FileClass::Binary;
    }
    let file = path.rsplit('/').next().unwrap_or(path);
    if file.to_ascii_uppercase().starts_with("README") {
        return FileClass::Doc;
    }
    match map.language_for(path).map(|l| l.class) {
        Some(LangClass::Code) => FileClass::Code,
        Some(LangClass::Config) => FileClass::Config,
        Some(LangClass::Doc) | None => FileClass::Doc,
    }
}

pub fn extract_zones(content: &str, language: &str) -> Result<Vec<Zone>> {
    extract_zones_with(LangMap::builtin(), content, language)
}

pub fn extract_zones_with(map: &LangMap, content: &str, language: &str) -> Result<Vec<Zone>> {
    let spec = map
        .lexer_for(language)
        .ok_or_else(|| ScrubError::UnsupportedLanguage(language.to_owned()))?;
    Ok(lex(spec, content))
}

enum Opener<'s> {
    Line,
    Block(&'s str),
    Str(&'s crate::lang::StringSpec),
}

fn lex(spec: &LexSpec, content: &str) -> Vec<Zone> {
    let mut openers: Vec<(&str, Opener)> = Vec::new();
    openers.extend(spec.line.iter().map(|o| (o.as_str(), Opener::Line)));
    openers.extend(spec.block.iter().map(|(o, c)| (o.as_str(), Opener::Block(c.as_str()))));
    openers.extend(spec.strings.iter().map(|s| (s.open.as_str(), Opener::Str(s))));
    // Longest opener wins: `"""` before `"`, `--[[` before `--`.
    openers.sort_by_key(|(o, _)| std::cmp::Reverse(o.len()));

    let bytes = content.as_bytes();
    let len = bytes.len();
    let mut zones = Vec::new();
    let mut i = 0;
    'outer: while i < len {
        for (open, kind) in &openers {
            if !bytes[i..].starts_with(open.as_bytes()) {
                continue;
            }
            let start = i;
            let inner = i + open.len();
            let zone = match kind {
                Opener::Line => {
                    if spec.line_needs_word_start && i > 0 && !bytes[i - 1].is_ascii_whitespace() {
                        continue;
                    }
                    let end = memchr(b'\n', bytes, inner).unwrap_or(len);
                    Zone { kind: ZoneKind::Comment, span: start..end, content: inner..end }
                }
                Opener::Block(close) => match find(bytes, inner, close.as_bytes()) {
                    Some(at) => Zone {
                        kind: ZoneKind::Comment,
                        span: start..at + close.len(),
                        content: inner..at,
                    },
                    None => Zone { kind: ZoneKind::Comment, span: start..len, content: inner..len },
                },
                Opener::Str(s) => {
                    let close = s.close.as_bytes();
                    let mut j = inner;
                    let mut end = None;
                    while j < len {
                        if Some(bytes[j] as char) == s.escape {
                            j += 2;
                            continue;
                        }
                        if bytes[j..].starts_with(close) {
                            end = Some((j, j + close.len()));
                            break;
                        }
                        if bytes[j] == b'\n' && !s.multiline {
                            end = Some((j, j));
                            break;
                        }
                        j += 1;
                    }
                    let (inner_end, end) = end.unwrap_or((len, len));
                    Zone { kind: ZoneKind::String, span: start..end, content: inner..inner_end.min(len) }
                }
            };
            i = zone.span.end;
            zones.push(zone);
            continue 'outer;
        }
        i += 1;
    }
    zones
}

fn memchr(needle: u8, hay: &[u8], from: usize) -> Option<usize> {
    hay[from..].iter().position(|&b| b == needle).map(|p| p + from)
}

fn find(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if from > hay.len() {
        return None;
    }
    hay[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

/// Content with every zone byte replaced by a space, newlines kept.
fn blank_zones(content: &str, zones: &[Zone]) -> Vec<u8> {
    let mut out = content.as_bytes().to_vec();
    for z in zones {
        for b in &mut out[z.span.clone()] {
            if *b != b'\n' {
                *b = b' ';
            }
        }
    }
    out
}

pub fn extract_functions(content: &str, language: &str) -> Vec<FunctionSpan> {
    extract_functions_with(LangMap::builtin(), content, language)
}

/// Empty for languages without a lexer or a function style.
pub fn extract_functions_with(map: &LangMap, content: &str, language: &str) -> Vec<FunctionSpan> {
    let Some(lang) = map.language(language) else {
        return Vec::new();
    };
    let (Some(style), Some(spec)) = (&lang.functions, map.lexer_for(language)) else {
        return Vec::new();
    };
    let code = blank_zones(content, &lex(spec, content));
    let mut spans = match style {
        FunctionStyle::Keyword { keywords } => keyword_functions(&code, keywords),
        FunctionStyle::CLike => c_like_functions(&code),
        FunctionStyle::Indent { keywords } => indent_functions(&code, content.as_bytes(), keywords),
    };
    spans.sort_by_key(|r| (r.start, r.end));
    spans.dedup();
    spans
        .into_iter()
        .map(|span| FunctionSpan {
            line_count: content.as_bytes()[span.clone()].iter().filter(|&&b| b == b'\n').count() + 1,
            span,
        })
        .collect()
}

fn is_ident(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn word_at(code: &[u8], i: usize, word: &str) -> bool {
    code[i..].starts_with(word.as_bytes())
        && (i == 0 || !is_ident(code[i - 1]))
        && code.get(i + word.len()).is_none_or(|&b| !is_ident(b))
}

/// Index one past the `}` matching the `{` at `open`, or EOF.
fn match_brace(code: &[u8], open: usize) -> usize {
    let mut depth = 0usize;
    for (k, &b) in code.iter().enumerate().skip(open) {
        match b {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return k + 1;
                }
            }
            _ => {}
        }
    }
    code.len()
}

fn keyword_functions(code: &[u8], keywords: &[String]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    for i in 0..code.len() {
        let Some(kw) = keywords.iter().find(|k| word_at(code, i, k)) else {
            continue;
        };
        let mut paren = 0i32;
        let mut j = i + kw.len();
        while j < code.len() {
            match code[j] {
                b'(' | b'[' => paren += 1,
                b')' | b']' => paren -= 1,
                b'{' if paren <= 0 => {
                    out.push(i..match_brace(code, j));
                    break;
                }
                b';' | b'}' if paren <= 0 => break,
                _ if paren <= 0 && keywords.iter().any(|k| word_at(code, j, k)) => break,
                _ => {}
            }
            j += 1;
        }
    }
    out
}

const NOT_FUNCTIONS: &[&str] = &[
    "if", "for", "while", "switch", "catch", "return", "new", "sizeof", "foreach", "using", "lock",
    "synchronized", "do", "else", "try", "elif", "until", "case", "when", "with",
];

const QUALIFIERS: &[&str] = &["const", "override", "final", "noexcept", "mutable", "volatile"];

fn c_like_functions(code: &[u8]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut header_start = 0;
    for (i, &b) in code.iter().enumerate() {
        match b {
            b'{' => {
                if let Some(name) = c_like_name(code, header_start, i) {
                    out.push(name..match_brace(code, i));
                }
                header_start = i + 1;
            }
            b';' | b'}' => header_start = i + 1,
            _ => {}
        }
    }
    out
}

/// Start of the function name when `code[from..brace]` reads as a definition
/// header: `... name(args) [qualifiers]`.
fn c_like_name(code: &[u8], from: usize, brace: usize) -> Option<usize> {
    let mut end = brace;
    loop {
        while end > from && code[end - 1].is_ascii_whitespace() {
            end -= 1;
        }
        if end == from || code[end - 1] == b')' {
            break;
        }
        let ws = (from..end).rev().take_while(|&k| is_ident(code[k])).last()?;
        if QUALIFIERS.contains(&std::str::from_utf8(&code[ws..end]).ok()?) {
            end = ws;
            continue;
        }
        // `throws A, B`
        let head = std::str::from_utf8(&code[from..end]).ok()?;
        let at = from + head.rfind("throws")?;
        let tail_ok = code[at + 6..end]
            .iter()
            .all(|&c| is_ident(c) || c == b'.' || c == b',' || c.is_ascii_whitespace());
        if !tail_ok || !word_at(code, at, "throws") {
            return None;
        }
        end = at;
    }
    if end == from || code[end - 1] != b')' {
        return None;
    }
    let mut depth = 0i32;
    let mut open = None;
    for k in (from..end).rev() {
        match code[k] {
            b')' => depth += 1,
            b'(' => {
                depth -= 1;
                if depth == 0 {
                    open = Some(k);
                    break;
                }
            }
            _ => {}
        }
    }
    let mut name_end = open?;
    while name_end > from && code[name_end - 1].is_ascii_whitespace() {
        name_end -= 1;
    }
    let name_start = (from..name_end).rev().take_while(|&k| is_ident(code[k])).last()?;
    let name = std::str::from_utf8(&code[name_start..name_end]).ok()?;
    if name.as_bytes()[0].is_ascii_digit() || NOT_FUNCTIONS.contains(&name) {
        return None;
    }
    let before = std::str::from_utf8(&code[from..name_start]).ok()?;
    if before.contains('=') || before.contains("->") || before.contains('(') {
        return None;
    }
    if before.split(|c: char| !is_ident(c as u8)).any(|w| NOT_FUNCTIONS.contains(&w)) {
        return None;
    }
    Some(name_start)
}

fn indent_of(line: &[u8]) -> usize {
    line.iter().take_while(|&&b| b == b' ' || b == b'\t').count()
}

fn indent_functions(code: &[u8], original: &[u8], keywords: &[String]) -> Vec<Range<usize>> {
    let mut lines = Vec::new();
    let mut start = 0;
    for (i, &b) in code.iter().enumerate() {
        if b == b'\n' {
            lines.push(start..i);
            start = i + 1;
        }
    }
    if start < code.len() {
        lines.push(start..code.len());
    }
    let blank = |r: &Range<usize>, text: &[u8]| text[r.clone()].iter().all(u8::is_ascii_whitespace);

    let mut out = Vec::new();
    for (li, line) in lines.iter().enumerate() {
        let text = &code[line.clone()];
        let indent = indent_of(text);
        let mut at = line.start + indent;
        if word_at(code, at, "async") {
            at += 5;
            while at < line.end && code[at].is_ascii_whitespace() {
                at += 1;
            }
        }
        if !keywords.iter().any(|k| word_at(code, at, k)) {
            continue;
        }
        // Signature may wrap; find the `:` at bracket depth zero.
        let mut depth = 0i32;
        let mut colon = None;
        for (k, &b) in code.iter().enumerate().skip(at) {
            match b {
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' | b'}' => depth -= 1,
                b':' if depth <= 0 => {
                    colon = Some(k);
                    break;
                }
                _ => {}
            }
        }
        let Some(colon) = colon else { continue };
        let colon_line = lines.iter().position(|r| r.contains(&colon) || r.end == colon).unwrap_or(li);
        let rest = colon + 1..lines[colon_line].end;
        if !blank(&rest, code) {
            out.push(line.start + indent..lines[colon_line].end);
            continue;
        }
        let mut last = colon_line;
        for (k, body) in lines.iter().enumerate().skip(colon_line + 1) {
            if blank(body, code) {
                if !blank(body, original) && indent_of(&original[body.clone()]) > indent {
                    last = k;
                }
                continue;
            }
            if indent_of(&code[body.clone()]) <= indent {
                break;
            }
            last = k;
        }
        out.push(line.start + indent..lines[last].end);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts<'a>(content: &'a str, zones: &[Zone]) -> Vec<(ZoneKind, &'a str)> {
        zones.iter().map(|z| (z.kind, &content[z.span.clone()])).collect()
    }

    #[test]
    fn classify() {
        assert_eq!(classify_file("src/main.c", b"int x;"), FileClass::Code);
        assert_eq!(classify_file("config/app.yaml", b"a: 1"), FileClass::Config);
        assert_eq!(classify_file("logo.png", b"\x89PNG\0\0"), FileClass::Binary);
        assert_eq!(classify_file("README", b"hi"), FileClass::Doc);
        assert_eq!(classify_file("docs/readme.py", b"x"), FileClass::Doc);
        assert_eq!(classify_file("notes.weird", b"x"), FileClass::Doc);
        assert_eq!(classify_file(".env", b"A=1"), FileClass::Config);
    }

    #[test]
    fn c_line_comment() {
        let s = "int x = 1; // email a@b.co";
        let z = extract_zones(s, "C").unwrap();
        assert_eq!(texts(s, &z), vec![(ZoneKind::Comment, "// email a@b.co")]);
        assert_eq!(&s[z[0].content.clone()], " email a@b.co");
    }

    #[test]
    fn hash_string_then_comment() {
        let s = "s = \"tok\" # c";
        let z = extract_zones(s, "Ruby").unwrap();
        assert_eq!(
            texts(s, &z),
            vec![(ZoneKind::String, "\"tok\""), (ZoneKind::Comment, "# c")]
        );
    }

    #[test]
    fn comment_marker_inside_string() {
        let s = "\"a /* not comment */\"";
        let z = extract_zones(s, "C").unwrap();
        assert_eq!(texts(s, &z), vec![(ZoneKind::String, s)]);
    }

    #[test]
    fn escapes_and_unterminated() {
        let s = r#"x = "a\"b" + 'c"#;
        let z = extract_zones(s, "JavaScript").unwrap();
        assert_eq!(
            texts(s, &z),
            vec![(ZoneKind::String, r#""a\"b""#), (ZoneKind::String, "'c")]
        );
        let s = "/* open\nforever";
        let z = extract_zones(s, "C").unwrap();
        assert_eq!(z[0].span, 0..s.len());
    }

    #[test]
    fn single_line_string_stops_at_newline() {
        let s = "x = \"abc\ny = 1 // c";
        let z = extract_zones(s, "C").unwrap();
        assert_eq!(
            texts(s, &z),
            vec![(ZoneKind::String, "\"abc"), (ZoneKind::Comment, "// c")]
        );
    }

    #[test]
    fn python_triple_quotes() {
        let s = "def f():\n    \"\"\"doc \"quoted\"\n    more\"\"\"\n    return 'x'  # done\n";
        let z = extract_zones(s, "Python").unwrap();
        let t = texts(s, &z);
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].1, "\"\"\"doc \"quoted\"\n    more\"\"\"");
        assert_eq!(t[1], (ZoneKind::String, "'x'"));
        assert_eq!(t[2], (ZoneKind::Comment, "# done"));
    }

    #[test]
    fn shell_hash_needs_word_start() {
        let s = "echo ${#arr} # count";
        let z = extract_zones(s, "Bourne Shell").unwrap();
        assert_eq!(texts(s, &z), vec![(ZoneKind::Comment, "# count")]);
    }

    #[test]
    fn lua_block_beats_line() {
        let s = "--[[ a\nb ]] x = 1 -- tail";
        let z = extract_zones(s, "Lua").unwrap();
        assert_eq!(
            texts(s, &z),
            vec![(ZoneKind::Comment, "--[[ a\nb ]]"), (ZoneKind::Comment, "-- tail")]
        );
    }

    #[test]
    fn unsupported_language() {
        let err = extract_zones("x", "Fortran").unwrap_err();
        assert_eq!(err.code(), "UNSUPPORTED_LANGUAGE");
        assert!(extract_zones("x", "Klingon").is_err());
    }

    fn counts(content: &str, language: &str) -> Vec<usize> {
        extract_functions(content, language).iter().map(|f| f.line_count).collect()
    }

    #[test]
    fn functions_rust() {
        let s = "use x;\n\nfn a() {\n    1\n}\n\n// fn fake() {}\nfn b(x: u8) -> Result<(), E>\nwhere\n    T: A,\n{\n    2\n}\n";
        assert_eq!(counts(s, "Rust"), vec![3, 6]);
        let s = "trait T {\n    fn decl(&self);\n    fn body(&self) {\n    }\n}\n";
        assert_eq!(counts(s, "Rust"), vec![2]);
    }

    #[test]
    fn functions_c_like() {
        let s = "#include <stdio.h>\n\nstatic int add(int a, int b) {\n    return a + b;\n}\n\nint main(void)\n{\n    if (add(1, 2)) {\n        puts(\"}\");\n    }\n    return 0;\n}\n";
        assert_eq!(counts(s, "C"), vec![3, 7]);
        let s = "class A {\n  @Override\n  public void run() throws IOException {\n    while (x) { y(); }\n    Runnable r = new Runnable() {\n    };\n  }\n}\n";
        assert_eq!(counts(s, "Java"), vec![5]);
        let s = "struct S { int a; };\nint f() const {\n}\n";
        assert_eq!(counts(s, "C++"), vec![2]);
    }

    #[test]
    fn functions_python() {
        let s = "import os\n\ndef one(a,\n        b):\n    \"\"\"doc\n\nend\"\"\"\n    return a\n\n\nclass K:\n    async def two(self): return 1\n\n    def three(self):\n        # note\n        x = 1\n\n        return x\n# trailing\n";
        assert_eq!(counts(s, "Python"), vec![6, 1, 5]);
    }

    #[test]
    fn functions_three_and_five() {
        let s = "function small() {\n  return 1;\n}\n\nfunction big(a) {\n  let b = a;\n  b += 1;\n  return b;\n}\n";
        assert_eq!(counts(s, "JavaScript"), vec![3, 5]);
        let s = "def small():\n    x = 1\n    return x\n\ndef big():\n    a = 1\n    b = 2\n    c = 3\n    return a + b + c\n";
        assert_eq!(counts(s, "Python"), vec![3, 5]);
    }

    #[test]
    fn functions_unsupported_or_empty() {
        assert!(extract_functions("SUBROUTINE X\nEND\n", "Fortran").is_empty());
        assert!(extract_functions("", "Rust").is_empty());
        assert!(extract_functions("", "Python").is_empty());
    }

    fn token() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("x".to_owned()),
            Just(" ".to_owned()),
            Just("\n".to_owned()),
            Just("//".to_owned()),
            Just("/*".to_owned()),
            Just("*/".to_owned()),
            Just("\"".to_owned()),
            Just("'".to_owned()),
            Just("\\".to_owned()),
            Just("#".to_owned()),
            Just("`".to_owned()),
            Just("\"\"\"".to_owned()),
            Just("é".to_owned()),
            "[a-z{}();=]{1,3}",
        ]
    }

    proptest! {
        #[test]
        fn zones_are_sorted_and_relex_alone(
            parts in proptest::collection::vec(token(), 0..40),
            lang in prop::sample::select(vec!["C", "Python", "JavaScript", "Go", "Bourne Shell", "Lua", "SQL"]),
        ) {
            let s = parts.concat();
            let zones = extract_zones(&s, lang).unwrap();
            prop_assert_eq!(&zones, &extract_zones(&s, lang).unwrap());
            let mut prev = 0;
            for z in &zones {
                prop_assert!(prev <= z.span.start && z.span.start < z.span.end && z.span.end <= s.len());
                prop_assert!(z.span.start <= z.content.start && z.content.end <= z.span.end);
                prop_assert!(s.is_char_boundary(z.span.start) && s.is_char_boundary(z.span.end));
                prev = z.span.end;
                let alone = &s[z.span.clone()];
                let again = extract_zones(alone, lang).unwrap();
                prop_assert_eq!(again.len(), 1, "zone {:?} relexed as {:?}", alone, again);
                prop_assert_eq!(again[0].kind, z.kind);
                prop_assert_eq!(again[0].span.clone(), 0..alone.len());
                // Lexing is left-to-right: the prefix ending here sees the same zones.
                let prefix = extract_zones(&s[..z.span.end], lang).unwrap();
                prop_assert_eq!(prefix.last(), Some(z));
            }
        }

        #[test]
        fn functions_are_well_formed(
            parts in proptest::collection::vec(token(), 0..40),
            lang in prop::sample::select(vec!["C", "Python", "JavaScript", "Rust", "Java"]),
        ) {
            let s = parts.concat();
            for f in extract_functions(&s, lang) {
                prop_assert!(f.line_count >= 1);
                prop_assert!(f.span.start < f.span.end && f.span.end <= s.len());
            }
        }
    }
}
