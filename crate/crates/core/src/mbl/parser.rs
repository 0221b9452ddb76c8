//! Recursive-descent parser for MBL surface syntax.
//!
//! ```text
//! expr    := item (('∘')? item)*
//! item    := primary postfix*
//! primary := run | '(' expr? ')' | '{' query (',' query)* '}' | '@' | '_' | '[' expr ']'
//! run     := block tag? (block tag?)*
//! postfix := '?' | '!' | '[' expr ']' | integer        (no whitespace before)
//! ```
//!
//! Blocks are written `A`..`Z`, `A1`..`Z1`, … and must be separated by
//! whitespace. When a run of blocks is directly followed by `[` or an
//! exponent, the postfix binds to the last block only. `#` starts a comment.

use crate::cache::Block;

use super::ast::{MblExpr, Op, Query, Tag};
use super::MblError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tok {
    Block(Block),
    Int(u32),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    At,
    Underscore,
    Tag(Tag),
    Compose,
}

#[derive(Clone, Copy, Debug)]
struct Token {
    tok: Tok,
    pos: usize,
    spaced: bool,
}

fn syntax(pos: usize, msg: impl Into<String>) -> MblError {
    MblError::Syntax {
        pos,
        msg: msg.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, MblError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut spaced = true;
    while let Some(&(pos, c)) = chars.peek() {
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            chars.next();
            spaced = true;
            continue;
        }
        let tok = match c {
            'A'..='Z' => {
                let start = pos;
                let mut end = pos + c.len_utf8();
                chars.next();
                while let Some(&(p, d)) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    end = p + 1;
                    chars.next();
                }
                let name = &text[start..end];
                let block = name
                    .parse::<Block>()
                    .map_err(|_| syntax(pos, format!("invalid block name {name:?}")))?;
                tokens.push(Token {
                    tok: Tok::Block(block),
                    pos,
                    spaced,
                });
                spaced = false;
                continue;
            }
            '0'..='9' => {
                let mut end = pos;
                while let Some(&(p, d)) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    end = p + 1;
                    chars.next();
                }
                let k = text[pos..end]
                    .parse::<u32>()
                    .map_err(|_| syntax(pos, "exponent out of range"))?;
                tokens.push(Token {
                    tok: Tok::Int(k),
                    pos,
                    spaced,
                });
                spaced = false;
                continue;
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            '@' => Tok::At,
            '_' => Tok::Underscore,
            '?' => Tok::Tag(Tag::Profile),
            '!' => Tok::Tag(Tag::Invalidate),
            '∘' => Tok::Compose,
            other => return Err(syntax(pos, format!("unexpected character {other:?}"))),
        };
        chars.next();
        tokens.push(Token { tok, pos, spaced });
        spaced = false;
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.at).copied()
    }

    fn pos(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.peek();
        self.at += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), MblError> {
        match self.bump() {
            Some(t) if t.tok == want => Ok(()),
            Some(t) => Err(syntax(t.pos, format!("expected {what}"))),
            None => Err(syntax(self.end, format!("expected {what}"))),
        }
    }

    fn starts_item(tok: Tok) -> bool {
        matches!(
            tok,
            Tok::Block(_) | Tok::LParen | Tok::LBrace | Tok::At | Tok::Underscore | Tok::LBracket
        )
    }

    fn expr(&mut self) -> Result<MblExpr, MblError> {
        let mut items = vec![self.item()?];
        loop {
            match self.peek() {
                Some(t) if t.tok == Tok::Compose => {
                    self.bump();
                    items.push(self.item()?);
                }
                Some(t) if Self::starts_item(t.tok) => items.push(self.item()?),
                _ => break,
            }
        }
        Ok(if items.len() == 1 {
            items.pop().expect("one item")
        } else {
            MblExpr::Concat(items)
        })
    }

    fn is_postfix(tok: Option<Token>) -> bool {
        matches!(tok, Some(t) if !t.spaced && matches!(t.tok, Tok::LBracket | Tok::Int(_) | Tok::Tag(_)))
    }

    fn item(&mut self) -> Result<MblExpr, MblError> {
        let start = self.pos();
        let Some(first) = self.peek() else {
            return Err(syntax(start, "expected an expression"));
        };
        let expr = match first.tok {
            Tok::Block(_) => {
                let mut ops = self.run()?;
                let binds_last = matches!(
                    self.peek(),
                    Some(t) if !t.spaced && matches!(t.tok, Tok::LBracket | Tok::Int(_))
                );
                if binds_last && ops.len() > 1 {
                    // `A B[C]`: the extension applies to B alone.
                    let last = ops.pop().expect("non-empty run");
                    let head = MblExpr::Query(Query(ops));
                    let tail = self.postfix(MblExpr::Query(Query(vec![last])))?;
                    return Ok(MblExpr::Concat(vec![head, tail]));
                }
                MblExpr::Query(Query(ops))
            }
            Tok::LParen => {
                self.bump();
                if matches!(self.peek(), Some(t) if t.tok == Tok::RParen) {
                    self.bump();
                    MblExpr::Query(Query::default())
                } else {
                    let inner = self.expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    inner
                }
            }
            Tok::LBrace => {
                self.bump();
                let mut queries = vec![Query(self.set_member()?)];
                while matches!(self.peek(), Some(t) if t.tok == Tok::Comma) {
                    self.bump();
                    queries.push(Query(self.set_member()?));
                }
                self.expect(Tok::RBrace, "'}'")?;
                MblExpr::Set(queries)
            }
            Tok::At => {
                self.bump();
                MblExpr::Fill
            }
            Tok::Underscore => {
                self.bump();
                MblExpr::Wildcard
            }
            Tok::LBracket => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RBracket, "']'")?;
                MblExpr::Extend(Box::new(MblExpr::Query(Query::default())), Box::new(inner))
            }
            Tok::Int(_) => return Err(syntax(first.pos, "exponent without a preceding group")),
            Tok::Tag(_) => return Err(syntax(first.pos, "tag without a preceding expression")),
            _ => return Err(syntax(first.pos, "expected an expression")),
        };
        self.postfix(expr)
    }

    fn postfix(&mut self, mut expr: MblExpr) -> Result<MblExpr, MblError> {
        while Self::is_postfix(self.peek()) {
            let t = self.bump().expect("peeked");
            expr = match t.tok {
                Tok::Tag(tag) => {
                    if expr.has_tags() {
                        return Err(syntax(t.pos, "tag applied to an already-tagged expression"));
                    }
                    MblExpr::Tagged(Box::new(expr), tag)
                }
                Tok::LBracket => {
                    let ext = self.expr()?;
                    self.expect(Tok::RBracket, "']'")?;
                    MblExpr::Extend(Box::new(expr), Box::new(ext))
                }
                Tok::Int(k) => MblExpr::Power(Box::new(expr), k),
                _ => unreachable!("is_postfix"),
            };
        }
        if let Some(t) = self.peek() {
            if matches!(t.tok, Tok::Int(_)) {
                return Err(syntax(t.pos, "exponent must directly follow a group"));
            }
            if matches!(t.tok, Tok::Tag(_)) {
                return Err(syntax(t.pos, "tag must directly follow its expression"));
            }
        }
        Ok(expr)
    }

    /// Blocks with optional attached tags.
    fn run(&mut self) -> Result<Vec<Op>, MblError> {
        let mut ops = Vec::new();
        while let Some(t) = self.peek() {
            let Tok::Block(block) = t.tok else { break };
            if !ops.is_empty() && !t.spaced {
                return Err(syntax(t.pos, "blocks must be separated by whitespace"));
            }
            if !ops.is_empty()
                && matches!(self.tokens.get(self.at + 1), Some(n) if !n.spaced && matches!(n.tok, Tok::LBracket | Tok::Int(_)))
            {
                // Leave the last block for the caller to split off.
                ops.push(Op::access(block));
                self.bump();
                break;
            }
            self.bump();
            let mut op = Op::access(block);
            if let Some(n) = self.peek() {
                if let (Tok::Tag(tag), false) = (n.tok, n.spaced) {
                    self.bump();
                    op.tag = Some(tag);
                    if matches!(self.peek(), Some(m) if !m.spaced && matches!(m.tok, Tok::Tag(_))) {
                        return Err(syntax(
                            self.pos(),
                            "tag applied to an already-tagged expression",
                        ));
                    }
                }
            }
            ops.push(op);
        }
        Ok(ops)
    }

    fn set_member(&mut self) -> Result<Vec<Op>, MblError> {
        let ops = self.run()?;
        if let Some(t) = self.peek() {
            if !matches!(t.tok, Tok::Comma | Tok::RBrace) {
                return Err(syntax(t.pos, "set members must be plain queries"));
            }
        }
        Ok(ops)
    }
}

const MAX_NESTING: usize = 64;

/// Parses one MBL expression.
pub fn parse(text: &str) -> Result<MblExpr, MblError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(syntax(0, "empty expression"));
    }
    let mut depth = 0usize;
    for t in &tokens {
        match t.tok {
            Tok::LParen | Tok::LBracket | Tok::LBrace => {
                depth += 1;
                if depth > MAX_NESTING {
                    return Err(syntax(t.pos, format!("nesting deeper than {MAX_NESTING}")));
                }
            }
            Tok::RParen | Tok::RBracket | Tok::RBrace => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    let end = text.find('#').unwrap_or(text.len());
    let mut parser = Parser { tokens, at: 0, end };
    let expr = parser.expr()?;
    if let Some(t) = parser.peek() {
        return Err(syntax(t.pos, "unexpected token"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> MblExpr {
        let ops = s
            .split_whitespace()
            .map(|w| {
                let (name, tag) = match w.strip_suffix('?') {
                    Some(n) => (n, Some(Tag::Profile)),
                    None => match w.strip_suffix('!') {
                        Some(n) => (n, Some(Tag::Invalidate)),
                        None => (w, None),
                    },
                };
                Op {
                    block: name.parse().unwrap(),
                    tag,
                }
            })
            .collect();
        MblExpr::Query(Query(ops))
    }

    #[test]
    fn fill_probe_example() {
        assert_eq!(
            parse("@ X _?").unwrap(),
            MblExpr::Concat(vec![
                MblExpr::Fill,
                q("X"),
                MblExpr::Tagged(Box::new(MblExpr::Wildcard), Tag::Profile)
            ])
        );
    }

    #[test]
    fn power_of_group() {
        assert_eq!(
            parse("(A B C)3").unwrap(),
            MblExpr::Power(Box::new(q("A B C")), 3)
        );
    }

    #[test]
    fn extension_and_tags() {
        assert_eq!(
            parse("(A B C D)[E F]").unwrap(),
            MblExpr::Extend(Box::new(q("A B C D")), Box::new(q("E F")))
        );
        assert_eq!(
            parse("(A B)?").unwrap(),
            MblExpr::Tagged(Box::new(q("A B")), Tag::Profile)
        );
        assert_eq!(parse("A B? C!").unwrap(), q("A B? C!"));
        assert_eq!(
            parse("A B[C]").unwrap(),
            MblExpr::Concat(vec![
                q("A"),
                MblExpr::Extend(Box::new(q("B")), Box::new(q("C")))
            ])
        );
        assert_eq!(
            parse("[A B C D]?").unwrap(),
            MblExpr::Tagged(
                Box::new(MblExpr::Extend(
                    Box::new(MblExpr::Query(Query::default())),
                    Box::new(q("A B C D"))
                )),
                Tag::Profile
            )
        );
    }

    #[test]
    fn explicit_composition_and_sets() {
        assert_eq!(
            parse("@ ∘ X ∘ A?").unwrap(),
            MblExpr::Concat(vec![MblExpr::Fill, q("X"), q("A?")])
        );
        assert_eq!(
            parse("{A B, C}").unwrap(),
            MblExpr::Set(vec![
                Query(vec![Op::access(Block(0)), Op::access(Block(1))]),
                Query(vec![Op::access(Block(2))]),
            ])
        );
        assert_eq!(parse("()").unwrap(), MblExpr::Query(Query::default()));
        assert_eq!(parse("A1 B # comment").unwrap(), q("A1 B"));
    }

    #[test]
    fn deep_nesting_is_rejected() {
        let deep = format!("{}A{}", "(".repeat(65), ")".repeat(65));
        assert!(matches!(parse(&deep), Err(MblError::Syntax { .. })));
        let ok = format!("{}A{}", "(".repeat(64), ")".repeat(64));
        assert!(parse(&ok).is_ok());
    }

    #[test]
    fn syntax_errors() {
        for bad in [
            "",
            "   ",
            "# only a comment",
            "(A B",
            "A B)",
            "(A B)?!",
            "(A? B)?",
            "A??",
            "3",
            "(A) 3",
            "A ?",
            "AB",
            "a",
            "{A, (B)}",
            "@ $",
            "[A",
        ] {
            assert!(
                matches!(parse(bad), Err(MblError::Syntax { .. })),
                "{bad:?} should fail"
            );
        }
        let Err(MblError::Syntax { pos, .. }) = parse("A B $") else {
            panic!()
        };
        assert_eq!(pos, 4);
    }

    #[test]
    fn printer_round_trips_examples() {
        for text in [
            "@ X _?",
            "(A B C)3",
            "(A B C D)[E F]",
            "(A B)?",
            "[A B C D]?",
            "A B[C]",
            "{A B, C}",
            "() @",
            "(@ X) _?",
            "D C B A @",
            "(_)2[@]!",
        ] {
            let ast = parse(text).unwrap();
            let printed = ast.to_string();
            assert_eq!(parse(&printed).unwrap(), ast, "{text} -> {printed}");
        }
    }
}
