//! Textual policy language.
//!
//! ```text
//! # comment
//! default deny
//!
//! policy P1: [u_e, L_1, *, 80, TCP] scope {LB_1, F_1, CE, S_1, u_e}
//!     waypoints [F_1 -> LB_1] occur {F_1 == 1, LB_1 == 1}
//! policy P2: [u_e, u_1, *, 80, TCP] from LB_1 scope {LB_1, IPS_1, S_3, u_1}
//!     waypoints [IPS_1] occur {IPS_1 >= 1}
//! ```
//!
//! The five class positions are src, dst, sport, dport, proto; `*` is a
//! wildcard. `from <node>` pins the packet's injection or rebirth point.
//! `to <address>` names the delivery target when it differs from the
//! header destination — a reply that must be handed to the load balancer
//! (which rewrites it into a new packet) is delivered, for this policy's
//! purposes, at the load balancer's address. Inside `waypoints`, `->`
//! chains create precedence pairs and `,` separates unordered members.
//! `occur` accepts `==`, `>=`, `<=` and the strict forms `>`/`<`, which
//! normalize to `>=`/`<=` at parse time. The full grammar ships in
//! `docs/policy-dsl.ebnf`.

use std::collections::BTreeSet;
use std::fmt;

use crate::netmodel::{Address, HeaderPattern, NodeRef};

use super::{
    OccurrenceConstraint, PacketClass, Policy, PolicyId, PolicySet, Relation, WaypointSpec,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(u64),
    Star,
    Colon,
    Comma,
    Arrow,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Op(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(n) => write!(f, "`{n}`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Op(op) => write!(f, "`{op}`"),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

type Spanned = (Tok, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self, c: char) {
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        while let Some(c) = self.peek() {
            let (line, col) = (self.line, self.col);
            match c {
                ' ' | '\t' | '\r' | '\n' => self.bump(c),
                '#' => {
                    while let Some(c) = self.peek() {
                        self.bump(c);
                        if c == '\n' {
                            break;
                        }
                    }
                }
                '*' => {
                    self.bump(c);
                    out.push((Tok::Star, line, col));
                }
                ':' => {
                    self.bump(c);
                    out.push((Tok::Colon, line, col));
                }
                ',' => {
                    self.bump(c);
                    out.push((Tok::Comma, line, col));
                }
                '[' => {
                    self.bump(c);
                    out.push((Tok::LBracket, line, col));
                }
                ']' => {
                    self.bump(c);
                    out.push((Tok::RBracket, line, col));
                }
                '{' => {
                    self.bump(c);
                    out.push((Tok::LBrace, line, col));
                }
                '}' => {
                    self.bump(c);
                    out.push((Tok::RBrace, line, col));
                }
                '-' => {
                    self.bump(c);
                    match self.peek() {
                        Some('>') => {
                            self.bump('>');
                            out.push((Tok::Arrow, line, col));
                        }
                        _ => {
                            return Err(ParseError {
                                line,
                                col,
                                message: "expected `->`".to_string(),
                            })
                        }
                    }
                }
                '=' | '>' | '<' => {
                    self.bump(c);
                    let eq = self.peek() == Some('=');
                    if eq {
                        self.bump('=');
                    }
                    let op = match (c, eq) {
                        ('=', true) => "==",
                        ('>', true) => ">=",
                        ('<', true) => "<=",
                        ('>', false) => ">",
                        ('<', false) => "<",
                        _ => {
                            return Err(ParseError {
                                line,
                                col,
                                message: "expected `==`".to_string(),
                            })
                        }
                    };
                    out.push((Tok::Op(op), line, col));
                }
                c if c.is_ascii_digit() => {
                    let mut n: u64 = 0;
                    while let Some(d) = self.peek().filter(char::is_ascii_digit) {
                        n = n.saturating_mul(10).saturating_add(u64::from(d as u8 - b'0'));
                        self.bump(d);
                    }
                    out.push((Tok::Number(n), line, col));
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = self.pos;
                    while let Some(a) = self
                        .peek()
                        .filter(|a| a.is_ascii_alphanumeric() || *a == '_')
                    {
                        self.bump(a);
                    }
                    out.push((Tok::Ident(self.src[start..self.pos].to_string()), line, col));
                }
                other => {
                    return Err(ParseError {
                        line,
                        col,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            }
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<Spanned>,
    idx: usize,
}

impl Parser {
    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.idx) {
            Some((_, l, c)) => (*l, *c),
            None => self
                .toks
                .last()
                .map(|(_, l, c)| (*l, *c + 1))
                .unwrap_or((1, 1)),
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    /// Error pinned to an earlier position (semantic problems report the
    /// policy they belong to, not wherever parsing happens to stand).
    fn err_at(&self, at: (usize, usize), message: impl Into<String>) -> ParseError {
        ParseError {
            line: at.0,
            col: at.1,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _, _)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t == want => {
                self.idx += 1;
                Ok(())
            }
            Some(t) => Err(self.err(format!("expected {want}, found {t}"))),
            None => Err(self.err(format!("expected {want}, found end of input"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.idx += 1;
                Ok(s)
            }
            Some(t) => Err(self.err(format!("expected {what}, found {t}"))),
            None => Err(self.err(format!("expected {what}, found end of input"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    /// Skips to the next `policy` keyword for error recovery.
    fn sync(&mut self) {
        while let Some(t) = self.peek() {
            if matches!(t, Tok::Ident(s) if s == "policy") {
                return;
            }
            self.idx += 1;
        }
    }

    fn class_position(&mut self) -> Result<Option<String>, ParseError> {
        match self.next() {
            Some(Tok::Star) => Ok(None),
            Some(Tok::Ident(s)) => Ok(Some(s)),
            Some(t) => Err(self.err(format!("expected address token or `*`, found {t}"))),
            None => Err(self.err("expected address token or `*`")),
        }
    }

    fn port_position(&mut self) -> Result<Option<u16>, ParseError> {
        match self.next() {
            Some(Tok::Star) => Ok(None),
            Some(Tok::Number(n)) if n <= u64::from(u16::MAX) => Ok(Some(n as u16)),
            Some(Tok::Number(n)) => Err(self.err(format!("port {n} out of range"))),
            Some(t) => Err(self.err(format!("expected port or `*`, found {t}"))),
            None => Err(self.err("expected port or `*`")),
        }
    }

    fn policy(&mut self) -> Result<Policy, ParseError> {
        let start = self.here();
        let id = self.ident("policy id")?;
        self.expect(&Tok::Colon)?;

        self.expect(&Tok::LBracket)?;
        let src = self.class_position()?;
        self.expect(&Tok::Comma)?;
        let dst = self.class_position()?;
        self.expect(&Tok::Comma)?;
        let sport = self.port_position()?;
        self.expect(&Tok::Comma)?;
        let dport = self.port_position()?;
        self.expect(&Tok::Comma)?;
        let proto = self.class_position()?;
        self.expect(&Tok::RBracket)?;

        let origin = if self.keyword("from") {
            Some(NodeRef::new(self.ident("origin node")?))
        } else {
            None
        };

        let explicit_dest = if self.keyword("to") {
            Some(Address::new(self.ident("destination address")?))
        } else {
            None
        };
        let destination = match (explicit_dest, &dst) {
            (Some(d), _) => d,
            (None, Some(d)) => Address::new(d.clone()),
            (None, None) => {
                return Err(self.err("policy destination must be concrete: give a dst or a `to` clause"))
            }
        };

        if !self.keyword("scope") {
            return Err(self.err("expected `scope` clause"));
        }
        self.expect(&Tok::LBrace)?;
        let mut scope = BTreeSet::new();
        while !matches!(self.peek(), Some(Tok::RBrace)) {
            scope.insert(NodeRef::new(self.ident("scope node")?));
            if matches!(self.peek(), Some(Tok::Comma)) {
                self.idx += 1;
            }
        }
        self.expect(&Tok::RBrace)?;

        let mut waypoints: Vec<NodeRef> = Vec::new();
        let mut precedence: BTreeSet<(NodeRef, NodeRef)> = BTreeSet::new();
        if self.keyword("waypoints") {
            self.expect(&Tok::LBracket)?;
            while !matches!(self.peek(), Some(Tok::RBracket)) {
                // One chain: ident (-> ident)*
                let mut prev = NodeRef::new(self.ident("waypoint node")?);
                if !waypoints.contains(&prev) {
                    waypoints.push(prev.clone());
                }
                while matches!(self.peek(), Some(Tok::Arrow)) {
                    self.idx += 1;
                    let next = NodeRef::new(self.ident("waypoint node")?);
                    if !waypoints.contains(&next) {
                        waypoints.push(next.clone());
                    }
                    precedence.insert((prev, next.clone()));
                    prev = next;
                }
                if matches!(self.peek(), Some(Tok::Comma)) {
                    self.idx += 1;
                }
            }
            self.expect(&Tok::RBracket)?;
        }

        let mut occurrence = Vec::new();
        if self.keyword("occur") {
            self.expect(&Tok::LBrace)?;
            while !matches!(self.peek(), Some(Tok::RBrace)) {
                let node = NodeRef::new(self.ident("occurrence node")?);
                let op = match self.next() {
                    Some(Tok::Op(op)) => op,
                    Some(t) => return Err(self.err(format!("expected comparison, found {t}"))),
                    None => return Err(self.err("expected comparison")),
                };
                let count = match self.next() {
                    Some(Tok::Number(n)) => n as usize,
                    Some(t) => return Err(self.err(format!("expected count, found {t}"))),
                    None => return Err(self.err("expected count")),
                };
                // Strict forms normalize: `> k` is `>= k+1`, `< k` is `<= k-1`.
                let (relation, count) = match op {
                    "==" => (Relation::Eq, count),
                    ">=" => (Relation::Ge, count),
                    "<=" => (Relation::Le, count),
                    ">" => (Relation::Ge, count + 1),
                    "<" => {
                        if count == 0 {
                            return Err(self.err("`< 0` is unsatisfiable"));
                        }
                        (Relation::Le, count - 1)
                    }
                    _ => unreachable!("lexer emits only known operators"),
                };
                occurrence.push(OccurrenceConstraint {
                    node,
                    relation,
                    count,
                });
                if matches!(self.peek(), Some(Tok::Comma)) {
                    self.idx += 1;
                }
            }
            self.expect(&Tok::RBrace)?;
        }

        let spec = WaypointSpec {
            waypoints,
            precedence,
            occurrence,
        };
        if let Err(msg) = spec.validate() {
            return Err(self.err_at(start, format!("{id}: {msg}")));
        }
        if let Some(w) = spec.waypoints.iter().find(|w| !scope.contains(*w)) {
            return Err(self.err_at(
                start,
                format!("{id}: waypoint `{w}` is outside the scope"),
            ));
        }

        Ok(Policy {
            id: PolicyId(id),
            class: PacketClass {
                pattern: HeaderPattern {
                    src: src.map(Address::new),
                    dst: dst.map(Address::new),
                    sport,
                    dport,
                    proto,
                },
                origin,
            },
            destination,
            waypoints: spec,
            scope,
        })
    }
}

/// Parses a policy-set document. On failure returns every error found,
/// each with its line and column; parsing resumes at the next `policy`
/// keyword after an error.
pub fn parse_policy_set(text: &str) -> Result<PolicySet, Vec<ParseError>> {
    let toks = match Lexer::new(text).tokens() {
        Ok(t) => t,
        Err(e) => return Err(vec![e]),
    };
    let mut p = Parser { toks, idx: 0 };
    let mut policies: Vec<Policy> = Vec::new();
    let mut errors = Vec::new();

    while p.peek().is_some() {
        if p.keyword("default") {
            if !p.keyword("deny") {
                errors.push(p.err("the default is always deny and cannot be changed"));
                p.sync();
            }
            continue;
        }
        if p.keyword("policy") {
            match p.policy() {
                Ok(pol) => {
                    if policies.iter().any(|q| q.id == pol.id) {
                        errors.push(p.err(format!("duplicate policy id `{}`", pol.id)));
                    } else {
                        policies.push(pol);
                    }
                }
                Err(e) => {
                    errors.push(e);
                    p.sync();
                }
            }
            continue;
        }
        errors.push(p.err("expected `policy` or `default deny`"));
        p.sync();
    }

    if errors.is_empty() {
        Ok(PolicySet::new(policies))
    } else {
        Err(errors)
    }
}

fn render_pattern_pos(v: &Option<Address>) -> String {
    match v {
        Some(a) => a.0.clone(),
        None => "*".to_string(),
    }
}

fn render_port_pos(v: Option<u16>) -> String {
    match v {
        Some(p) => p.to_string(),
        None => "*".to_string(),
    }
}

fn render_waypoints(spec: &WaypointSpec) -> String {
    // Walk members in stored order, joining with `->` where that adjacent
    // pair is a precedence constraint. Pairs not expressible that way are
    // appended as explicit chains.
    let mut used: BTreeSet<(NodeRef, NodeRef)> = BTreeSet::new();
    let mut out = String::new();
    for (i, w) in spec.waypoints.iter().enumerate() {
        if i > 0 {
            let prev = &spec.waypoints[i - 1];
            let pair = (prev.clone(), w.clone());
            if spec.precedence.contains(&pair) {
                used.insert(pair);
                out.push_str(" -> ");
            } else {
                out.push_str(", ");
            }
        }
        out.push_str(w.as_str());
    }
    for (a, b) in &spec.precedence {
        if !used.contains(&(a.clone(), b.clone())) {
            out.push_str(&format!(", {} -> {}", a, b));
        }
    }
    out
}

/// Renders a policy set to canonical text: `default deny` banner, one
/// policy per line, scope tokens sorted. `parse_policy_set` of the output
/// reproduces the input structurally.
pub fn render_policy_set(ps: &PolicySet) -> String {
    let mut out = String::from("default deny\n");
    for p in &ps.policies {
        out.push('\n');
        out.push_str(&format!(
            "policy {}: [{}, {}, {}, {}, {}]",
            p.id,
            render_pattern_pos(&p.class.pattern.src),
            render_pattern_pos(&p.class.pattern.dst),
            render_port_pos(p.class.pattern.sport),
            render_port_pos(p.class.pattern.dport),
            p.class.pattern.proto.as_deref().unwrap_or("*"),
        ));
        if let Some(origin) = &p.class.origin {
            out.push_str(&format!(" from {origin}"));
        }
        if p.class.pattern.dst.as_ref() != Some(&p.destination) {
            out.push_str(&format!(" to {}", p.destination));
        }
        let scope: Vec<&str> = p.scope.iter().map(|n| n.as_str()).collect();
        out.push_str(&format!(" scope {{{}}}", scope.join(", ")));
        if !p.waypoints.waypoints.is_empty() {
            out.push_str(&format!(" waypoints [{}]", render_waypoints(&p.waypoints)));
        }
        if !p.waypoints.occurrence.is_empty() {
            let occurs: Vec<String> = p
                .waypoints
                .occurrence
                .iter()
                .map(|c| format!("{} {} {}", c.node, c.relation.symbol(), c.count))
                .collect();
            out.push_str(&format!(" occur {{{}}}", occurs.join(", ")));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_sample_policy_line() {
        let text = "policy P1: [u_e, L_1, *, 80, TCP] scope {LB1,F1,CE,S1,u_e} \
                    waypoints [F1 -> LB1] occur {F1 == 1, LB1 == 1}";
        let ps = parse_policy_set(text).expect("parses");
        assert_eq!(ps.len(), 1);
        let p = &ps.policies[0];
        assert_eq!(p.id, PolicyId::from("P1"));
        assert_eq!(p.waypoints.waypoints.len(), 2);
        assert_eq!(p.waypoints.precedence.len(), 1);
        assert_eq!(p.waypoints.occurrence.len(), 2);
        assert_eq!(p.class.pattern.sport, None);
        assert_eq!(p.class.pattern.dport, Some(80));
        assert_eq!(p.destination, Address::from("L_1"));
        assert_eq!(p.scope.len(), 5);
    }

    #[test]
    fn empty_waypoint_clause_yields_empty_spec() {
        let text = "policy P4: [u_1, u_e, 80, *, TCP] from LB_1 scope {LB_1, F_1, CE, S_1, u_e} waypoints []";
        let ps = parse_policy_set(text).expect("parses");
        assert!(ps.policies[0].waypoints.is_empty());
        assert_eq!(ps.policies[0].class.origin, Some(NodeRef::from("LB_1")));
    }

    #[test]
    fn strict_greater_normalizes_to_ge() {
        let text = "policy P2: [u_e, u_1, *, 80, TCP] scope {IPS_1, u_1} \
                    waypoints [IPS_1] occur {IPS_1 > 0}";
        let ps = parse_policy_set(text).expect("parses");
        let c = &ps.policies[0].waypoints.occurrence[0];
        assert_eq!(c.relation, Relation::Ge);
        assert_eq!(c.count, 1);
    }

    #[test]
    fn vacuous_constraint_is_an_error() {
        let text = "policy P: [a, b, *, *, TCP] scope {b, F1} waypoints [F1] occur {F1 >= 0}";
        let errs = parse_policy_set(text).unwrap_err();
        assert!(errs[0].message.contains("vacuous"), "{errs:?}");
    }

    #[test]
    fn occurrence_on_non_waypoint_is_an_error() {
        let text = "policy P: [a, b, *, *, TCP] scope {b} occur {X == 1}";
        let errs = parse_policy_set(text).unwrap_err();
        assert!(errs[0].message.contains("non-waypoint"), "{errs:?}");
    }

    #[test]
    fn cyclic_precedence_is_an_error() {
        let text = "policy P: [a, b, *, *, TCP] scope {b, X, Y} waypoints [X -> Y, Y -> X]";
        let errs = parse_policy_set(text).unwrap_err();
        assert!(errs[0].message.contains("cycle"), "{errs:?}");
    }

    #[test]
    fn errors_carry_position_and_parsing_recovers() {
        let text = "policy Bad: [a, b, *, *, TCP] nonsense {b}\n\
                    policy Good: [a, b, *, *, TCP] scope {b}\n";
        let errs = parse_policy_set(text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 1);
        assert!(errs[0].col > 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "policy P: [a, b, *, *, TCP] scope {b}\npolicy P: [a, b, *, *, TCP] scope {b}\n";
        let errs = parse_policy_set(text).unwrap_err();
        assert!(errs[0].message.contains("duplicate"));
    }

    #[test]
    fn multiple_broken_policies_all_reported() {
        let text = "policy A: [a, b, *, *, TCP] oops {b}\n\
                    policy B: [a, b, *, *, TCP] scope {b} occur {X == 1}\n\
                    policy C: [a, b, *, *, TCP] scope {b}\n";
        let errs = parse_policy_set(text).unwrap_err();
        assert_eq!(errs.len(), 2, "{errs:?}");
        assert_eq!(errs[0].line, 1);
        assert_eq!(errs[1].line, 2);
    }

    #[test]
    fn wildcard_destination_rejected_without_to_clause() {
        let text = "policy P: [a, *, *, *, TCP] scope {b}";
        let errs = parse_policy_set(text).unwrap_err();
        assert!(errs[0].message.contains("destination"));
    }

    #[test]
    fn to_clause_sets_a_handoff_destination() {
        let text = "policy P3: [u_1, u_e, 80, *, TCP] from u_1 to L_1 scope {LB_1, u_1}";
        let ps = parse_policy_set(text).expect("parses");
        let p = &ps.policies[0];
        assert_eq!(p.destination, Address::from("L_1"));
        assert_eq!(p.class.pattern.dst, Some(Address::from("u_e")));
        let rendered = render_policy_set(&ps);
        assert!(rendered.contains(" to L_1 "));
        assert_eq!(parse_policy_set(&rendered).unwrap(), ps);
    }

    #[test]
    fn empty_set_renders_only_the_banner() {
        let text = render_policy_set(&PolicySet::default());
        assert_eq!(text, "default deny\n");
        let ps = parse_policy_set(&text).expect("banner parses");
        assert!(ps.is_empty());
    }

    #[test]
    fn render_parse_round_trip_on_a_mixed_set() {
        let text = "policy P1: [u_e, L_1, *, 80, TCP] scope {LB_1, F_1, CE, S_1, u_e} \
                    waypoints [F_1 -> LB_1] occur {F_1 == 1, LB_1 == 1}\n\
                    policy P3: [u_1, u_e, 80, *, TCP] from u_1 scope {LB_1, IPS_1, S_3, u_1} \
                    waypoints [LB_1, IPS_1] occur {LB_1 == 1, IPS_1 >= 1}\n\
                    policy P4: [u_1, u_e, 80, *, UDP] scope {u_e}\n";
        let ps = parse_policy_set(text).expect("parses");
        let rendered = render_policy_set(&ps);
        let ps2 = parse_policy_set(&rendered).expect("round-trip parses");
        assert_eq!(ps, ps2);
    }

    #[test]
    fn render_is_canonical_for_minimal_policy() {
        let text = "policy P: [a, b, *, *, *] scope {z, b, a}";
        let ps = parse_policy_set(text).unwrap();
        let rendered = render_policy_set(&ps);
        assert_eq!(
            rendered,
            "default deny\n\npolicy P: [a, b, *, *, *] scope {a, b, z}\n"
        );
    }
}
