//! Readable text form of template programs.
//!
//! ```text
//! template extended
//! max_age 3
//! initial {3,3,3,0}
//!
//! promote(state, pos):
//!   state[pos] = 0
//!   for i != pos: keep state[i]
//!
//! evict(state):
//!   first i with state[i] == 3
//!
//! insert(state, idx):
//!   state[idx] = 1
//!   for i != idx: keep state[i]
//!
//! normalize(state, touched) after hit, after miss:
//!   while no i with state[i] == 3:
//!     for i != touched: state[i] = state[i] + 1
//! ```

use std::fmt::{self, Write as _};

use super::program::{
    Atom, BoolExpr, Branch, Cmp, EvictRule, LineRule, NatExpr, NormalizeRule, TemplateKind,
    TemplateProgram, Term, Who,
};
use super::{Result, SynthError};

pub(crate) fn term_name(t: Term, touched: &str) -> String {
    match t {
        Term::Const(c) => c.to_string(),
        Term::Age(Who::Touched) => format!("state[{touched}]"),
        Term::Age(Who::Other) => "state[i]".to_string(),
        Term::Line(Who::Touched) => touched.to_string(),
        Term::Line(Who::Other) => "i".to_string(),
    }
}

fn bool_text(e: &BoolExpr, touched: &str) -> String {
    if e.0.is_empty() {
        return "true".to_string();
    }
    let atoms: Vec<String> =
        e.0.iter()
            .map(|a| {
                format!(
                    "{} {} {}",
                    term_name(a.lhs, touched),
                    a.cmp.symbol(),
                    term_name(a.rhs, touched)
                )
            })
            .collect();
    atoms.join(" && ")
}

fn nat_text(e: &NatExpr, touched: &str) -> String {
    match e {
        NatExpr::Term(t) => term_name(*t, touched),
        NatExpr::Add(a, b) | NatExpr::Sub(a, b) => {
            let op = if matches!(e, NatExpr::Add(..)) {
                "+"
            } else {
                "-"
            };
            let right = match **b {
                NatExpr::Term(_) => nat_text(b, touched),
                _ => format!("({})", nat_text(b, touched)),
            };
            format!("{} {op} {right}", nat_text(a, touched))
        }
    }
}

fn write_rule(out: &mut String, name: &str, touched: &str, rule: &LineRule) {
    let _ = writeln!(out, "{name}(state, {touched}):");
    let target = format!("state[{touched}]");
    if rule.touched.is_empty() {
        let _ = writeln!(out, "  keep {target}");
    }
    for (k, b) in rule.touched.iter().enumerate() {
        let value = nat_text(&b.value, touched);
        if k == 0 && b.guard.0.is_empty() && rule.touched.len() == 1 {
            let _ = writeln!(out, "  {target} = {value}");
        } else {
            let kw = if k == 0 { "if" } else { "elif" };
            let _ = writeln!(
                out,
                "  {kw} {}: {target} = {value}",
                bool_text(&b.guard, touched)
            );
        }
    }
    match rule.others.first() {
        None => {
            let _ = writeln!(out, "  for i != {touched}: keep state[i]");
        }
        Some(b) if b.guard.0.is_empty() => {
            let _ = writeln!(
                out,
                "  for i != {touched}: state[i] = {}",
                nat_text(&b.value, touched)
            );
        }
        Some(b) => {
            let _ = writeln!(
                out,
                "  for i != {touched}: if {}: state[i] = {}",
                bool_text(&b.guard, touched),
                nat_text(&b.value, touched)
            );
        }
    }
}

impl fmt::Display for TemplateProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(out, "template {}", self.kind);
        let _ = writeln!(out, "max_age {}", self.max_age);
        let _ = writeln!(out, "initial {}", self.initial);
        out.push('\n');
        write_rule(&mut out, "promote", "pos", &self.promote);
        out.push('\n');
        let _ = writeln!(out, "evict(state):");
        let _ = writeln!(out, "  first i with {}", bool_text(&self.evict.pred, "i"));
        out.push('\n');
        write_rule(&mut out, "insert", "idx", &self.insert);
        if let Some(n) = &self.normalize {
            let mut places = Vec::new();
            if n.after_hit {
                places.push("after hit");
            }
            if n.before_miss {
                places.push("before miss");
            }
            if n.after_miss {
                places.push("after miss");
            }
            out.push('\n');
            let _ = writeln!(out, "normalize(state, touched) {}:", places.join(", "));
            let _ = writeln!(out, "  while no i with {}:", bool_text(&n.found, "i"));
            let lines = if n.exclude_touched {
                "i != touched"
            } else {
                "i"
            };
            let _ = writeln!(
                out,
                "    for {lines}: state[i] = {}",
                nat_text(&n.update, "i")
            );
        }
        f.write_str(&out)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(u8),
    Sym(&'static str),
}

const SYMBOLS: [&str; 18] = [
    "{", "}", "==", "!=", "<=", ">=", "&&", "<", ">", "=", "+", "-", "[", "]", "(", ")", ":", ",",
];

fn lex(line: &str, lineno: usize) -> Result<Vec<Tok>> {
    let err = |msg: String| SynthError::Syntax { line: lineno, msg };
    let mut toks = Vec::new();
    let mut rest = line;
    loop {
        rest = rest.trim_start();
        if rest.is_empty() || rest.starts_with('#') || rest.starts_with("//") {
            break;
        }
        let c = rest.chars().next().unwrap();
        if c.is_ascii_digit() {
            let end = rest
                .find(|c: char| !c.is_ascii_digit())
                .unwrap_or(rest.len());
            let n = rest[..end]
                .parse::<u8>()
                .map_err(|_| err(format!("number `{}` is too large", &rest[..end])))?;
            toks.push(Tok::Num(n));
            rest = &rest[end..];
        } else if c.is_ascii_alphabetic() || c == '_' {
            let end = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(rest.len());
            toks.push(Tok::Ident(rest[..end].to_string()));
            rest = &rest[end..];
        } else if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            toks.push(Tok::Sym(sym));
            rest = &rest[sym.len()..];
        } else {
            return Err(err(format!("unexpected character `{c}`")));
        }
    }
    Ok(toks)
}

/// Keeps expression trees shallow enough for recursive evaluation.
const MAX_LINE_TOKENS: usize = 256;

struct Line {
    no: usize,
    toks: Vec<Tok>,
    pos: usize,
    /// Name of the touched line in the enclosing section.
    touched: &'static str,
}

impl Line {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(SynthError::Syntax {
            line: self.no,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == w)
    }

    fn sym(&mut self, s: &str) -> Result<()> {
        if self.at_sym(s) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn word(&mut self, w: &str) -> Result<()> {
        if self.at_word(w) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{w}`"))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected a name"),
        }
    }

    fn num(&mut self) -> Result<u8> {
        match self.peek() {
            Some(Tok::Num(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => self.err("expected a number"),
        }
    }

    fn end(&self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => self.err(format!("unexpected trailing {t:?}")),
        }
    }

    fn who(&self, name: &str) -> Result<Who> {
        if name == self.touched {
            Ok(Who::Touched)
        } else if name == "i" {
            Ok(Who::Other)
        } else {
            self.err(format!("unknown variable `{name}`"))
        }
    }

    fn term(&mut self) -> Result<Term> {
        if let Some(Tok::Num(_)) = self.peek() {
            return Ok(Term::Const(self.num()?));
        }
        let name = self.ident()?;
        if name == "state" {
            self.sym("[")?;
            let idx = self.ident()?;
            self.sym("]")?;
            return Ok(Term::Age(self.who(&idx)?));
        }
        Ok(Term::Line(self.who(&name)?))
    }

    fn state_ref(&mut self) -> Result<Who> {
        self.word("state")?;
        self.sym("[")?;
        let idx = self.ident()?;
        self.sym("]")?;
        self.who(&idx)
    }

    fn operand(&mut self) -> Result<NatExpr> {
        if self.at_sym("(") {
            self.pos += 1;
            let e = self.nat()?;
            self.sym(")")?;
            Ok(e)
        } else {
            Ok(NatExpr::Term(self.term()?))
        }
    }

    fn nat(&mut self) -> Result<NatExpr> {
        let mut e = self.operand()?;
        loop {
            if self.at_sym("+") {
                self.pos += 1;
                e = NatExpr::add(e, self.operand()?);
            } else if self.at_sym("-") {
                self.pos += 1;
                e = NatExpr::sub(e, self.operand()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn boolean(&mut self) -> Result<BoolExpr> {
        if self.at_word("true") {
            self.pos += 1;
            return Ok(BoolExpr::truth());
        }
        let mut atoms = Vec::new();
        loop {
            let lhs = self.term()?;
            let (cmp, swap) = match self.peek() {
                Some(Tok::Sym("==")) => (Cmp::Eq, false),
                Some(Tok::Sym("!=")) => (Cmp::Ne, false),
                Some(Tok::Sym("<")) => (Cmp::Lt, false),
                Some(Tok::Sym("<=")) => (Cmp::Le, false),
                Some(Tok::Sym(">")) => (Cmp::Lt, true),
                Some(Tok::Sym(">=")) => (Cmp::Le, true),
                _ => return self.err("expected a comparison"),
            };
            self.pos += 1;
            let rhs = self.term()?;
            atoms.push(if swap {
                Atom {
                    lhs: rhs,
                    cmp,
                    rhs: lhs,
                }
            } else {
                Atom { lhs, cmp, rhs }
            });
            if !self.at_sym("&&") {
                return Ok(BoolExpr(atoms));
            }
            self.pos += 1;
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Promote,
    Evict,
    Insert,
    Normalize,
}

#[derive(Default)]
struct Partial {
    kind: Option<TemplateKind>,
    max_age: Option<u8>,
    initial: Option<super::AgeVector>,
    promote: Option<LineRule>,
    evict: Option<EvictRule>,
    insert: Option<LineRule>,
    normalize: Option<NormalizeRule>,
    // Normalization header seen, body pending.
    norm_places: Option<(bool, bool, bool)>,
    norm_found: Option<BoolExpr>,
}

fn rule_line(line: &mut Line, rule: &mut LineRule) -> Result<()> {
    let touched = line.touched;
    if line.at_word("keep") {
        line.pos += 1;
        if line.state_ref()? != Who::Touched {
            return line.err(format!("expected `state[{touched}]`"));
        }
        return line.end();
    }
    if line.at_word("for") {
        line.pos += 1;
        line.word("i")?;
        line.sym("!=")?;
        line.word(touched)?;
        line.sym(":")?;
        if !rule.others.is_empty() {
            return line.err("other lines are already updated");
        }
        if line.at_word("keep") {
            line.pos += 1;
            if line.state_ref()? != Who::Other {
                return line.err("expected `state[i]`");
            }
            return line.end();
        }
        let guard = if line.at_word("if") {
            line.pos += 1;
            let g = line.boolean()?;
            line.sym(":")?;
            g
        } else {
            BoolExpr::truth()
        };
        if line.state_ref()? != Who::Other {
            return line.err("expected `state[i]`");
        }
        line.sym("=")?;
        let value = line.nat()?;
        rule.others.push(Branch { guard, value });
        return line.end();
    }
    let guard = if line.at_word("if") || line.at_word("elif") {
        let is_elif = line.at_word("elif");
        if is_elif == rule.touched.is_empty() {
            return line.err(if is_elif {
                "`elif` without `if`"
            } else {
                "second `if`; use `elif`"
            });
        }
        line.pos += 1;
        let g = line.boolean()?;
        line.sym(":")?;
        g
    } else {
        if !rule.touched.is_empty() {
            return line.err(format!("state[{touched}] is already updated"));
        }
        BoolExpr::truth()
    };
    if line.state_ref()? != Who::Touched {
        return line.err(format!("expected `state[{touched}]`"));
    }
    line.sym("=")?;
    let value = line.nat()?;
    rule.touched.push(Branch { guard, value });
    line.end()
}

/// Parses the text form. Errors carry 1-based line numbers.
pub fn parse_program(text: &str) -> Result<TemplateProgram> {
    let mut p = Partial::default();
    let mut section = Section::Header;
    let mut current = LineRule::default();
    let mut last_line = 0;

    let flush = |section: Section, current: &mut LineRule, p: &mut Partial| match section {
        Section::Promote => p.promote = Some(std::mem::take(current)),
        Section::Insert => p.insert = Some(std::mem::take(current)),
        _ => {}
    };

    for (k, raw) in text.lines().enumerate() {
        let no = k + 1;
        last_line = no;
        let toks = lex(raw, no)?;
        if toks.is_empty() {
            continue;
        }
        if toks.len() > MAX_LINE_TOKENS {
            return Err(SynthError::Syntax {
                line: no,
                msg: format!("more than {MAX_LINE_TOKENS} tokens on one line"),
            });
        }
        let mut line = Line {
            no,
            toks,
            pos: 0,
            touched: match section {
                Section::Promote => "pos",
                Section::Insert => "idx",
                _ => "touched",
            },
        };
        // Section headers.
        let head = match line.peek() {
            Some(Tok::Ident(s)) => s.clone(),
            _ => String::new(),
        };
        let is_header = matches!(line.toks.get(1), Some(Tok::Sym("(")))
            && matches!(head.as_str(), "promote" | "evict" | "insert" | "normalize");
        if is_header {
            flush(section, &mut current, &mut p);
            if section == Section::Normalize && p.normalize.is_none() {
                return line.err("normalize section is incomplete");
            }
            line.pos = 2;
            line.word("state")?;
            let (next, touched) = match head.as_str() {
                "promote" => (Section::Promote, Some("pos")),
                "insert" => (Section::Insert, Some("idx")),
                "evict" => (Section::Evict, None),
                _ => (Section::Normalize, Some("touched")),
            };
            if let Some(t) = touched {
                line.sym(",")?;
                line.word(t)?;
            }
            line.sym(")")?;
            let seen = match next {
                Section::Promote => p.promote.is_some(),
                Section::Insert => p.insert.is_some(),
                Section::Evict => p.evict.is_some(),
                _ => p.norm_places.is_some(),
            };
            if seen {
                return line.err(format!("duplicate `{head}` section"));
            }
            if next == Section::Normalize {
                let (mut hit, mut before, mut after) = (false, false, false);
                while !line.at_sym(":") {
                    if line.at_word("after") {
                        line.pos += 1;
                        match line.ident()?.as_str() {
                            "hit" => hit = true,
                            "miss" => after = true,
                            other => return line.err(format!("unknown placement `after {other}`")),
                        }
                    } else {
                        line.word("before")?;
                        line.word("miss")?;
                        before = true;
                    }
                    if line.at_sym(",") {
                        line.pos += 1;
                    }
                }
                p.norm_places = Some((hit, before, after));
            }
            line.sym(":")?;
            line.end()?;
            section = next;
            continue;
        }
        match section {
            Section::Header => {
                let key = line.ident()?;
                match key.as_str() {
                    "template" => {
                        let v = line.ident()?;
                        p.kind = Some(v.parse().map_err(|_| SynthError::Syntax {
                            line: no,
                            msg: format!("unknown template `{v}`"),
                        })?);
                    }
                    "max_age" => p.max_age = Some(line.num()?),
                    "initial" => {
                        let start = raw.find("initial").unwrap() + "initial".len();
                        let body = raw[start..].split('#').next().unwrap_or("");
                        p.initial =
                            Some(body.parse().map_err(|e: SynthError| SynthError::Syntax {
                                line: no,
                                msg: e.to_string(),
                            })?);
                        continue;
                    }
                    other => return line.err(format!("unknown setting `{other}`")),
                }
                line.end()?;
            }
            Section::Promote | Section::Insert => rule_line(&mut line, &mut current)?,
            Section::Evict => {
                if p.evict.is_some() {
                    return line.err("eviction rule already given");
                }
                line.word("first")?;
                line.word("i")?;
                line.word("with")?;
                let pred = line.boolean()?;
                line.end()?;
                p.evict = Some(EvictRule { pred });
            }
            Section::Normalize => {
                if p.norm_found.is_none() {
                    line.word("while")?;
                    line.word("no")?;
                    line.word("i")?;
                    line.word("with")?;
                    let found = line.boolean()?;
                    line.sym(":")?;
                    line.end()?;
                    p.norm_found = Some(found);
                } else if p.normalize.is_none() {
                    line.word("for")?;
                    line.word("i")?;
                    let exclude = line.at_sym("!=");
                    if exclude {
                        line.pos += 1;
                        line.word("touched")?;
                    }
                    line.sym(":")?;
                    if line.state_ref()? != Who::Other {
                        return line.err("expected `state[i]`");
                    }
                    line.sym("=")?;
                    let update = line.nat()?;
                    line.end()?;
                    let (after_hit, before_miss, after_miss) = p.norm_places.unwrap_or_default();
                    p.normalize = Some(NormalizeRule {
                        found: p.norm_found.clone().unwrap(),
                        update,
                        exclude_touched: exclude,
                        after_hit,
                        before_miss,
                        after_miss,
                    });
                } else {
                    return line.err("normalize section has extra lines");
                }
            }
        }
    }
    flush(section, &mut current, &mut p);
    let missing = |what: &str| SynthError::Syntax {
        line: last_line,
        msg: format!("missing {what}"),
    };
    if p.norm_places.is_some() && p.normalize.is_none() {
        return Err(missing("normalize body"));
    }
    let prog = TemplateProgram {
        kind: p.kind.ok_or_else(|| missing("`template`"))?,
        max_age: p.max_age.ok_or_else(|| missing("`max_age`"))?,
        initial: p.initial.ok_or_else(|| missing("`initial`"))?,
        promote: p.promote.ok_or_else(|| missing("promote section"))?,
        evict: p.evict.ok_or_else(|| missing("evict section"))?,
        insert: p.insert.ok_or_else(|| missing("insert section"))?,
        normalize: p.normalize,
    };
    prog.validate()?;
    Ok(prog)
}

pub fn program_to_json(prog: &TemplateProgram) -> String {
    serde_json::to_string_pretty(prog).expect("programs serialize")
}

pub fn program_from_json(text: &str) -> Result<TemplateProgram> {
    let prog: TemplateProgram = serde_json::from_str(text)?;
    prog.validate()?;
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;
    use crate::synth::reference_program;

    #[test]
    fn reference_programs_round_trip() {
        for kind in PolicyKind::ALL {
            let Some(prog) = reference_program(kind, 4) else {
                continue;
            };
            let text = prog.to_string();
            assert_eq!(parse_program(&text).unwrap(), prog, "{kind}:\n{text}");
            assert_eq!(program_from_json(&program_to_json(&prog)).unwrap(), prog);
        }
    }

    #[test]
    fn new1_text() {
        let text = reference_program(PolicyKind::New1, 4).unwrap().to_string();
        assert!(text.contains("initial {3,3,3,0}"));
        assert!(text.contains("first i with state[i] == 3"));
        assert!(text.contains("normalize(state, touched) after hit, after miss:"));
        assert!(text.contains("for i != touched: state[i] = state[i] + 1"));
    }

    #[test]
    fn errors_name_the_line() {
        let good = reference_program(PolicyKind::Lru, 4).unwrap().to_string();
        let bad = good.replace("first i with", "first j with");
        match parse_program(&bad) {
            Err(SynthError::Syntax { line, .. }) => assert_eq!(line, 10, "{bad}"),
            other => panic!("{other:?}"),
        }
        let bad = good.replace("state[pos] = 0", "state[idx] = 0");
        assert!(matches!(
            parse_program(&bad),
            Err(SynthError::Syntax { line: 6, .. })
        ));
        assert!(parse_program("template simple\nmax_age 3\n").is_err());
        assert!(parse_program("template fancy\n").is_err());
        let long = format!(
            "{}  state[pos] = {}0\n",
            &good[..good.find("  state[pos]").unwrap()],
            "(".repeat(300)
        );
        assert!(matches!(
            parse_program(&long),
            Err(SynthError::Syntax { line: 6, .. })
        ));
    }

    #[test]
    fn comparisons_and_parentheses() {
        let text = "template extended\nmax_age 3\ninitial {0,0}\n\
                    promote(state, pos):\n  if state[pos] > 1 && 2 >= state[pos]: state[pos] = 3 - (state[pos] - 1)\n\
                    evict(state):\n  first i with i == 1  # comment\n\
                    insert(state, idx):\n  keep state[idx]\n  for i != idx: if state[i] < state[idx]: state[i] = 0\n";
        let prog = parse_program(text).unwrap();
        assert_eq!(prog.promote.touched[0].guard.0[0].lhs, Term::Const(1));
        assert_eq!(prog.promote.touched[0].value.depth(), 2);
        assert_eq!(parse_program(&prog.to_string()).unwrap(), prog);
    }
}
