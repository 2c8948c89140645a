//! Literal syntax for values: ints, floats (with `inf`, `-inf`, `nan`),
//! `True`/`False`/`None`, quoted strings, and nested lists.

use thiserror::Error;

use super::value::Value;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid literal at offset {offset}: {message}")]
pub struct LiteralError {
    pub offset: usize,
    pub message: String,
}

/// Parses exactly one literal; surrounding whitespace is allowed.
pub fn parse_literal(text: &str) -> Result<Value, LiteralError> {
    let (value, rest) = parse_literal_prefix(text)?;
    let trailing = rest.trim_start();
    if !trailing.is_empty() {
        return Err(LiteralError {
            offset: text.len() - trailing.len(),
            message: format!("unexpected trailing text {:?}", truncate(trailing)),
        });
    }
    Ok(value)
}

/// Parses a literal at the start of `text` (after optional whitespace) and
/// returns it with the unconsumed remainder.
pub fn parse_literal_prefix(text: &str) -> Result<(Value, &str), LiteralError> {
    let mut cursor = Cursor { text, pos: 0 };
    let v = cursor.value(0)?;
    Ok((v, &text[cursor.pos..]))
}

fn truncate(s: &str) -> String {
    s.chars().take(20).collect()
}

const MAX_DEPTH: usize = 64;

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn err(&self, message: impl Into<String>) -> LiteralError {
        LiteralError { offset: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    /// Consumes `word` only when it is not followed by an identifier char.
    fn eat_word(&mut self, word: &str) -> bool {
        let rest = self.rest();
        if rest.starts_with(word) && !rest[word.len()..].starts_with(|c: char| c.is_alphanumeric() || c == '_') {
            self.pos += word.len();
            true
        } else {
            false
        }
    }

    fn value(&mut self, depth: usize) -> Result<Value, LiteralError> {
        if depth > MAX_DEPTH {
            return Err(self.err("literal nested too deeply"));
        }
        self.skip_ws();
        let Some(c) = self.rest().chars().next() else {
            return Err(self.err("expected a literal, found end of text"));
        };
        match c {
            '[' => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if self.eat("]") {
                        break;
                    }
                    items.push(self.value(depth + 1)?);
                    self.skip_ws();
                    if self.eat(",") {
                        continue;
                    }
                    if self.eat("]") {
                        break;
                    }
                    return Err(self.err("expected ',' or ']' in list literal"));
                }
                Ok(Value::list(items))
            }
            '\'' | '"' => self.string(c),
            _ => {
                if self.eat_word("True") {
                    return Ok(Value::Bool(true));
                }
                if self.eat_word("False") {
                    return Ok(Value::Bool(false));
                }
                if self.eat_word("None") {
                    return Ok(Value::None);
                }
                self.number()
            }
        }
    }

    fn number(&mut self) -> Result<Value, LiteralError> {
        let start = self.pos;
        let negative = self.eat("-");
        if self.eat_word("inf") {
            return Ok(Value::Float(if negative { f64::NEG_INFINITY } else { f64::INFINITY }));
        }
        if self.eat_word("nan") {
            return Ok(Value::Float(f64::NAN));
        }
        let bytes = self.text.as_bytes();
        let mut is_float = false;
        let mut digits = 0;
        while self.pos < bytes.len() {
            let b = bytes[self.pos];
            if b.is_ascii_digit() {
                digits += 1;
                self.pos += 1;
            } else if b == b'.' && !is_float {
                is_float = true;
                self.pos += 1;
            } else if (b == b'e' || b == b'E') && digits > 0 {
                is_float = true;
                self.pos += 1;
                if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        if digits == 0 {
            self.pos = start;
            return Err(self.err(format!("expected a literal, found {:?}", truncate(self.rest()))));
        }
        let slice = &self.text[start..self.pos];
        if is_float {
            slice.parse::<f64>().map(Value::Float).map_err(|_| LiteralError {
                offset: start,
                message: format!("bad float {slice:?}"),
            })
        } else {
            slice.parse::<i64>().map(Value::Int).map_err(|_| LiteralError {
                offset: start,
                message: format!("integer {slice} out of range"),
            })
        }
    }

    fn string(&mut self, quote: char) -> Result<Value, LiteralError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        while let Some((i, c)) = chars.next() {
            if c == quote {
                self.pos += i + 1;
                return Ok(Value::Str(out));
            }
            if c == '\\' {
                match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, 'r')) => out.push('\r'),
                    Some((_, '0')) => out.push('\0'),
                    Some((_, e @ ('\\' | '\'' | '"'))) => out.push(e),
                    Some((_, other)) => {
                        out.push('\\');
                        out.push(other);
                    }
                    None => break,
                }
                continue;
            }
            out.push(c);
        }
        Err(LiteralError { offset: start, message: "unterminated string".into() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_scalars_and_lists() {
        assert_eq!(parse_literal("3").unwrap(), Value::Int(3));
        assert_eq!(parse_literal(" -33 ").unwrap(), Value::Int(-33));
        assert_eq!(parse_literal("-inf").unwrap(), Value::Float(f64::NEG_INFINITY));
        assert_eq!(parse_literal("2.5e-3").unwrap(), Value::Float(0.0025));
        assert_eq!(
            parse_literal("[2, 3, 3, 2]").unwrap(),
            Value::list(vec![Value::Int(2), Value::Int(3), Value::Int(3), Value::Int(2)])
        );
        assert_eq!(parse_literal("['a, b', None, True]").unwrap().render(), "['a, b', None, True]");
    }

    #[test]
    fn prefix_leaves_remainder() {
        let (v, rest) = parse_literal_prefix("[1, [2]], y=3").unwrap();
        assert_eq!(v.render(), "[1, [2]]");
        assert_eq!(rest, ", y=3");
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_literal("abc").is_err());
        assert!(parse_literal("[1, 2").is_err());
        assert!(parse_literal("1 2").is_err());
        assert!(parse_literal("'open").is_err());
    }

    pub(crate) fn arb_value() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            any::<i64>().prop_map(Value::Int),
            prop_oneof![
                any::<f64>().prop_filter("finite", |f| f.is_finite()),
                Just(f64::INFINITY),
                Just(f64::NEG_INFINITY)
            ]
            .prop_map(Value::Float),
            any::<bool>().prop_map(Value::Bool),
            "[ -~\\n\\t]{0,8}".prop_map(Value::Str),
            Just(Value::None),
        ];
        leaf.prop_recursive(4, 32, 5, |inner| prop::collection::vec(inner, 0..5).prop_map(Value::list))
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(v in arb_value()) {
            let text = v.render();
            let back = parse_literal(&text).unwrap();
            prop_assert_eq!(back.render(), text);
            prop_assert_eq!(back, v);
        }

        #[test]
        fn never_panics(s in ".{0,40}") {
            let _ = parse_literal(&s);
        }
    }
}
