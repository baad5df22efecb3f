//! Hand-written recursive-descent parser for scripts and commands.

use std::fmt;

use crate::eval::Expr;
use crate::ids::ReplicaId;
use crate::replica::Command;
use crate::value::{Number, Value};

use super::{Directive, Script, Statement};

const KEYWORDS: &[&str] = &[
    "doc", "let", "yield", "true", "false", "null", "replica", "sync", "render", "expect",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "syntax error at {}:{}: expected {}, found {}",
            self.line,
            self.col,
            self.expected.join(" | "),
            self.found
        )
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn line_col(&self, pos: usize) -> (usize, usize) {
        let before = &self.src[..pos];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }

    fn skip_trivia(&mut self) {
        loop {
            let r = self.rest();
            let trimmed = r.trim_start();
            self.pos += r.len() - trimmed.len();
            if trimmed.starts_with("//") {
                self.pos += trimmed.find('\n').unwrap_or(trimmed.len());
            } else {
                return;
            }
        }
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let (line, col) = self.line_col(self.pos);
        let found = match self.rest().chars().next() {
            None => "end of input".to_string(),
            Some(_) => {
                let tok: String = self
                    .rest()
                    .chars()
                    .take_while(|c| !c.is_whitespace())
                    .take(12)
                    .collect();
                format!("`{tok}`")
            }
        };
        ParseError {
            line,
            col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_trivia();
        self.pos == self.src.len()
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_trivia();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&[&format!("`{tok}`")]))
        }
    }

    fn peek_word(&mut self) -> Option<&'a str> {
        self.skip_trivia();
        let r = self.rest();
        if !r.starts_with(is_ident_start) {
            return None;
        }
        let end = r.find(|c| !is_ident_char(c)).unwrap_or(r.len());
        Some(&r[..end])
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_word() == Some(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek_word() {
            Some(w) if !KEYWORDS.contains(&w) => {
                self.pos += w.len();
                Ok(w.to_string())
            }
            _ => Err(self.error(&[what])),
        }
    }

    fn string_lit(&mut self) -> Result<String, ParseError> {
        self.skip_trivia();
        let r = self.rest();
        if !r.starts_with('"') {
            return Err(self.error(&["string literal"]));
        }
        let bytes = r.as_bytes();
        let mut i = 1;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => i += 2,
                b'"' => break,
                b'\n' => break,
                _ => i += 1,
            }
        }
        if i >= bytes.len() || bytes[i] != b'"' {
            return Err(self.error(&["closing `\"`"]));
        }
        let lit = &r[..=i];
        match serde_json::from_str::<String>(lit) {
            Ok(s) => {
                self.pos += lit.len();
                Ok(s)
            }
            Err(_) => Err(self.error(&["valid string escape"])),
        }
    }

    fn number_span(&mut self) -> Option<&'a str> {
        self.skip_trivia();
        let r = self.rest();
        let b = r.as_bytes();
        let mut i = 0;
        if b.first() == Some(&b'-') {
            i += 1;
        }
        let digits = |i: &mut usize| {
            let s = *i;
            while *i < b.len() && b[*i].is_ascii_digit() {
                *i += 1;
            }
            *i > s
        };
        if !digits(&mut i) {
            return None;
        }
        if b.get(i) == Some(&b'.') {
            let save = i;
            i += 1;
            if !digits(&mut i) {
                i = save;
            }
        }
        if matches!(b.get(i), Some(b'e') | Some(b'E')) {
            let save = i;
            i += 1;
            if matches!(b.get(i), Some(b'+') | Some(b'-')) {
                i += 1;
            }
            if !digits(&mut i) {
                i = save;
            }
        }
        Some(&r[..i])
    }

    fn uint(&mut self, what: &str) -> Result<usize, ParseError> {
        self.skip_trivia();
        let r = self.rest();
        let end = r.find(|c: char| !c.is_ascii_digit()).unwrap_or(r.len());
        match r[..end].parse::<usize>() {
            Ok(n) if end > 0 => {
                self.pos += end;
                Ok(n)
            }
            _ => Err(self.error(&[what])),
        }
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        const EXPECTED: &[&str] = &[
            "number",
            "string literal",
            "true",
            "false",
            "null",
            "{}",
            "[]",
        ];
        self.skip_trivia();
        if self.rest().starts_with('"') {
            return self.string_lit().map(Value::Str);
        }
        if self.eat("{") {
            self.expect("}")?;
            return Ok(Value::EmptyMap);
        }
        if self.eat("[") {
            self.expect("]")?;
            return Ok(Value::EmptyList);
        }
        if self.eat_keyword("true") {
            return Ok(Value::Bool(true));
        }
        if self.eat_keyword("false") {
            return Ok(Value::Bool(false));
        }
        if self.eat_keyword("null") {
            return Ok(Value::Null);
        }
        if let Some(span) = self.number_span() {
            let n: Number = span.parse().map_err(|_| self.error(EXPECTED))?;
            self.pos += span.len();
            return Ok(Value::Number(n));
        }
        Err(self.error(EXPECTED))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = if self.eat_keyword("doc") {
            Expr::Doc
        } else {
            Expr::var(self.ident("`doc` or variable")?)
        };
        loop {
            self.skip_trivia();
            let save = self.pos;
            if !self.eat(".") {
                return Ok(e);
            }
            match self.peek_word() {
                Some("get") => {
                    self.pos += 3;
                    self.expect("(")?;
                    let k = self.string_lit()?;
                    self.expect(")")?;
                    e = e.get(k);
                }
                Some("idx") => {
                    self.pos += 3;
                    self.expect("(")?;
                    let i = self.uint("non-negative integer")?;
                    self.expect(")")?;
                    e = e.idx(i);
                }
                Some("keys") => {
                    self.pos += 4;
                    return Ok(e.keys());
                }
                Some("values") => {
                    self.pos += 6;
                    return Ok(e.values());
                }
                Some("insertAfter") | Some("delete") => {
                    self.pos = save;
                    return Ok(e);
                }
                _ => {
                    return Err(self.error(&[
                        "get",
                        "idx",
                        "keys",
                        "values",
                        "insertAfter",
                        "delete",
                    ]))
                }
            }
        }
    }

    /// A single command or query, without the trailing separator.
    fn statement(&mut self) -> Result<Statement, ParseError> {
        if self.eat_keyword("yield") {
            return Ok(Statement::Cmd(Command::Yield));
        }
        if self.eat_keyword("let") {
            let x = self.ident("variable name")?;
            self.expect("=")?;
            let e = self.expr()?;
            if e.is_query() {
                return Err(self.error(&["cursor expression"]));
            }
            return Ok(Statement::Cmd(Command::Let(x, e)));
        }
        let e = self.expr()?;
        if e.is_query() {
            return Ok(Statement::Query(e));
        }
        if self.eat(":=") {
            return Ok(Statement::Cmd(Command::Assign(e, self.value()?)));
        }
        if self.eat(".") {
            if self.eat_keyword("insertAfter") {
                self.expect("(")?;
                let v = self.value()?;
                self.expect(")")?;
                return Ok(Statement::Cmd(Command::InsertAfter(e, v)));
            }
            if self.eat_keyword("delete") {
                return Ok(Statement::Cmd(Command::Delete(e)));
            }
        }
        Err(self.error(&[
            "`:=`",
            "`.insertAfter(`",
            "`.delete`",
            "`.keys`",
            "`.values`",
        ]))
    }

    fn directive(&mut self) -> Result<Directive, ParseError> {
        if self.eat_keyword("replica") {
            return Ok(Directive::ReplicaSwitch(ReplicaId::new(
                self.ident("replica name")?,
            )));
        }
        if self.eat_keyword("sync") {
            return Ok(Directive::Sync);
        }
        if self.peek_word() == Some("yield") {
            let save = self.pos;
            self.pos += 5;
            self.skip_trivia();
            if self.rest().starts_with(|c: char| c.is_ascii_digit()) {
                return Ok(Directive::YieldSteps(self.uint("step count")?));
            }
            self.pos = save;
        }
        if self.eat_keyword("render") {
            return Ok(Directive::Render(self.opt_replica()));
        }
        if self.eat_keyword("expect") {
            let who = self.opt_replica();
            self.skip_trivia();
            let mut stream =
                serde_json::Deserializer::from_str(self.rest()).into_iter::<serde_json::Value>();
            return match stream.next() {
                Some(Ok(_)) => {
                    let end = stream.byte_offset();
                    let text = self.rest()[..end].to_string();
                    self.pos += end;
                    Ok(Directive::Expect(who, text))
                }
                _ => Err(self.error(&["JSON document"])),
            };
        }
        match self.statement()? {
            Statement::Cmd(Command::Yield) => Ok(Directive::YieldSteps(1)),
            Statement::Cmd(c) => Ok(Directive::Cmd(c)),
            Statement::Query(e) => Ok(Directive::Query(e)),
        }
    }

    fn opt_replica(&mut self) -> Option<ReplicaId> {
        match self.peek_word() {
            Some(w) if !KEYWORDS.contains(&w) => {
                self.pos += w.len();
                Some(ReplicaId::new(w))
            }
            _ => None,
        }
    }

    /// `item (; item)* ;?`
    fn separated<T>(
        &mut self,
        mut item: impl FnMut(&mut Self) -> Result<T, ParseError>,
    ) -> Result<Vec<(usize, T)>, ParseError> {
        let mut out = Vec::new();
        while !self.at_end() {
            let (line, _) = self.line_col(self.pos);
            out.push((line, item(self)?));
            if self.at_end() {
                break;
            }
            self.expect(";")?;
        }
        Ok(out)
    }
}

/// Parses a script. If the first directive is not `replica`, an implicit
/// `replica p` is prepended.
pub fn parse_script(text: &str) -> Result<Script, ParseError> {
    let mut p = Parser::new(text);
    let mut directives = p.separated(Parser::directive)?;
    if !matches!(directives.first(), Some((_, Directive::ReplicaSwitch(_)))) {
        let line = directives.first().map_or(1, |(l, _)| *l);
        directives.insert(0, (line, Directive::ReplicaSwitch(ReplicaId::new("p"))));
    }
    Ok(Script { directives })
}

/// Parses `CMD (; CMD)*` into a single right-nested command.
pub fn parse_command(text: &str) -> Result<Command, ParseError> {
    let mut p = Parser::new(text);
    let items = p.separated(|p| match p.statement()? {
        Statement::Cmd(c) => Ok(c),
        Statement::Query(_) => Err(p.error(&["command"])),
    })?;
    Command::sequence(items.into_iter().map(|(_, c)| c)).ok_or_else(|| p.error(&["command"]))
}

/// Parses a single expression, e.g. `doc.get("a").idx(0)`.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text);
    let e = p.expr()?;
    if !p.at_end() {
        return Err(p.error(&["end of input"]));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIG8: &str = r#"doc := {};
doc.get("shopping") := [];
let head = doc.get("shopping").idx(0);
head.insertAfter("eggs");
let eggs = doc.get("shopping").idx(1);
head.insertAfter("cheese");
eggs.insertAfter("milk");
"#;

    #[test]
    fn shopping_program_has_seven_commands() {
        let s = parse_script(FIG8).unwrap();
        assert_eq!(s.directives.len(), 8);
        assert_eq!(
            s.directives[0].1,
            Directive::ReplicaSwitch(ReplicaId::new("p"))
        );
        assert!(s.directives[1..]
            .iter()
            .all(|(_, d)| matches!(d, Directive::Cmd(_))));
        assert_eq!(s.directives[3].0, 3);
    }

    #[test]
    fn assign_empty_map() {
        let c = parse_command(r#"doc.get("colors") := {};"#).unwrap();
        assert_eq!(c, Command::Assign(Expr::Doc.get("colors"), Value::EmptyMap));
    }

    #[test]
    fn unterminated_idx_is_error() {
        let e = parse_command("doc.idx(").unwrap_err();
        assert_eq!((e.line, e.col), (1, 9));
        assert_eq!(e.expected, vec!["non-negative integer"]);
        assert_eq!(e.found, "end of input");
    }

    #[test]
    fn values_and_escapes() {
        let c =
            parse_command(r#"x := "a\"bé"; x := -1.5e3; x := null; x := []; x.delete"#).unwrap();
        let text = c.to_string();
        assert!(text.contains(r#""a\"bé""#), "{text}");
        assert_eq!(parse_command(&text).unwrap(), c);
    }

    #[test]
    fn directives_and_comments() {
        let s = parse_script(
            r#"// two replicas
replica q;
doc := {};   // trailing
sync;
yield 3;
yield;
render;
render p;
expect q {"a": ["x;y"]};
doc.keys;
"#,
        )
        .unwrap();
        let ds: Vec<&Directive> = s.directives.iter().map(|(_, d)| d).collect();
        assert_eq!(ds[0], &Directive::ReplicaSwitch(ReplicaId::new("q")));
        assert_eq!(ds[2], &Directive::Sync);
        assert_eq!(ds[3], &Directive::YieldSteps(3));
        assert_eq!(ds[4], &Directive::YieldSteps(1));
        assert_eq!(ds[5], &Directive::Render(None));
        assert_eq!(ds[6], &Directive::Render(Some(ReplicaId::new("p"))));
        assert_eq!(
            ds[7],
            &Directive::Expect(Some(ReplicaId::new("q")), r#"{"a": ["x;y"]}"#.to_string())
        );
        assert_eq!(ds[8], &Directive::Query(Expr::Doc.keys()));
    }

    #[test]
    fn missing_separator_reports_position() {
        let e = parse_script("doc := {}\ndoc := []").unwrap_err();
        assert_eq!((e.line, e.col), (2, 1));
        assert_eq!(e.expected, vec!["`;`"]);
    }

    #[test]
    fn keywords_are_not_variables() {
        assert!(parse_command("let sync = doc").is_err());
        assert!(parse_command("let doc = doc").is_err());
        assert!(parse_command("let x = doc.keys").is_err());
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i32>().prop_map(|n| Value::int(n as i64)),
            "[a-z\"\\\\ é]{0,6}".prop_map(Value::Str),
            any::<bool>().prop_map(Value::Bool),
            Just(Value::Null),
            Just(Value::EmptyMap),
            Just(Value::EmptyList),
        ]
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let base = prop_oneof![
            Just(Expr::Doc),
            "[a-z][a-z0-9_]{0,4}".prop_filter_map("keyword", |s| {
                (!KEYWORDS.contains(&s.as_str())).then(|| Expr::var(s))
            })
        ];
        (
            base,
            prop::collection::vec((any::<bool>(), "[a-z\"]{0,4}", 0usize..5), 0..4),
        )
            .prop_map(|(mut e, steps)| {
                for (get, k, i) in steps {
                    e = if get { e.get(k) } else { e.idx(i) };
                }
                e
            })
    }

    fn arb_command() -> impl Strategy<Value = Command> {
        let single = prop_oneof![
            (
                "[a-z][a-z0-9]{0,3}".prop_filter("keyword", |s| !KEYWORDS.contains(&s.as_str())),
                arb_expr()
            )
                .prop_map(|(x, e)| Command::Let(x, e)),
            (arb_expr(), arb_value()).prop_map(|(e, v)| Command::Assign(e, v)),
            (arb_expr(), arb_value()).prop_map(|(e, v)| Command::InsertAfter(e, v)),
            arb_expr().prop_map(Command::Delete),
            Just(Command::Yield),
        ];
        prop::collection::vec(single, 1..5).prop_map(|cs| Command::sequence(cs).unwrap())
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(c in arb_command()) {
            prop_assert_eq!(parse_command(&c.to_string()).unwrap(), c);
        }

        #[test]
        fn expr_round_trips(e in arb_expr()) {
            prop_assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
        }
    }
}
