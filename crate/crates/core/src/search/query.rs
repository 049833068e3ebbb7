//! Query language: bare keywords, `AND`/`OR`/`NOT`, parentheses and quoted
//! phrases.
//!
//! ```text
//! expr  := or
//! or    := and ('OR' and)*
//! and   := unary (('AND')? unary)*
//! unary := 'NOT'? atom
//! atom  := PHRASE | TERM | '(' expr ')'
//! ```
//!
//! When the query contains no operator at all, juxtaposed atoms are OR-ed
//! (bag-of-words mode); otherwise juxtaposition means AND.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryAst {
    Term(String),
    Phrase(Vec<String>),
    And(Vec<QueryAst>),
    Or(Vec<QueryAst>),
    Not(Box<QueryAst>),
}

impl QueryAst {
    /// Tokens of every leaf not under a `Not`, with multiplicity.
    pub fn positive_terms(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_positive(&mut out);
        out
    }

    fn collect_positive(&self, out: &mut Vec<String>) {
        match self {
            QueryAst::Term(t) => out.push(t.clone()),
            QueryAst::Phrase(ts) => out.extend(ts.iter().cloned()),
            QueryAst::And(cs) | QueryAst::Or(cs) => cs.iter().for_each(|c| c.collect_positive(out)),
            QueryAst::Not(_) => {}
        }
    }

    /// Leaves not under a `Not`.
    pub fn positive_leaves(&self) -> Vec<&QueryAst> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a QueryAst>) {
        match self {
            QueryAst::Term(_) | QueryAst::Phrase(_) => out.push(self),
            QueryAst::And(cs) | QueryAst::Or(cs) => cs.iter().for_each(|c| c.collect_leaves(out)),
            QueryAst::Not(_) => {}
        }
    }

    /// Evaluates the boolean structure against a tokenized document.
    pub fn matches_tokens(&self, tokens: &[String]) -> bool {
        match self {
            QueryAst::Term(t) => tokens.iter().any(|x| x == t),
            QueryAst::Phrase(ts) => {
                !ts.is_empty() && tokens.windows(ts.len()).any(|w| w == ts.as_slice())
            }
            QueryAst::And(cs) => cs.iter().all(|c| c.matches_tokens(tokens)),
            QueryAst::Or(cs) => cs.iter().any(|c| c.matches_tokens(tokens)),
            QueryAst::Not(c) => !c.matches_tokens(tokens),
        }
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, cs: &[QueryAst], op: &str) -> fmt::Result {
            write!(f, "(")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")
        }
        match self {
            QueryAst::Term(t) => write!(f, "{t}"),
            QueryAst::Phrase(ts) => write!(f, "\"{}\"", ts.join(" ")),
            QueryAst::And(cs) => join(f, cs, "AND"),
            QueryAst::Or(cs) => join(f, cs, "OR"),
            QueryAst::Not(c) => write!(f, "NOT {c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    And,
    Or,
    Not,
    LParen,
    RParen,
    Word(Vec<String>),
    Phrase(Vec<String>),
}

fn lex(raw: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = raw.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' {
            out.push((Tok::LParen, i));
            i += 1;
        } else if c == ')' {
            out.push((Tok::RParen, i));
            i += 1;
        } else if c == '"' {
            let start = i;
            let close = chars[i + 1..].iter().position(|&c| c == '"').ok_or(Error::QueryParse {
                position: start,
                message: "unbalanced quote".into(),
            })?;
            let body: String = chars[i + 1..i + 1 + close].iter().collect();
            let tokens = tokenize(&body);
            if tokens.is_empty() {
                return Err(Error::QueryParse {
                    position: start,
                    message: "empty phrase".into(),
                });
            }
            out.push((Tok::Phrase(tokens), start));
            i += close + 2;
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !matches!(chars[i], '(' | ')' | '"')
            {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let tok = match word.as_str() {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                _ => {
                    let tokens = tokenize(&word);
                    // pure punctuation carries no searchable content
                    if tokens.is_empty() {
                        continue;
                    }
                    Tok::Word(tokens)
                }
            };
            out.push((tok, start));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
    bag_of_words: bool,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(_, p)| *p)
    }

    fn err<T>(&self, message: &str) -> Result<T> {
        Err(Error::QueryParse {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn or(&mut self) -> Result<QueryAst> {
        let mut children = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.at += 1;
            children.push(self.and()?);
        }
        Ok(collapse(children, QueryAst::Or))
    }

    fn and(&mut self) -> Result<QueryAst> {
        let mut children = vec![self.unary()?];
        loop {
            match self.peek() {
                Some(Tok::And) => {
                    self.at += 1;
                    children.push(self.unary()?);
                }
                Some(Tok::Word(_) | Tok::Phrase(_) | Tok::LParen | Tok::Not) => {
                    children.push(self.unary()?);
                }
                _ => break,
            }
        }
        if self.bag_of_words {
            Ok(collapse(children, QueryAst::Or))
        } else {
            Ok(collapse(children, QueryAst::And))
        }
    }

    fn unary(&mut self) -> Result<QueryAst> {
        if self.peek() == Some(&Tok::Not) {
            self.at += 1;
            return Ok(QueryAst::Not(Box::new(self.atom()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<QueryAst> {
        match self.peek().cloned() {
            Some(Tok::Word(mut ts)) => {
                self.at += 1;
                Ok(if ts.len() == 1 {
                    QueryAst::Term(ts.pop().unwrap())
                } else {
                    QueryAst::Phrase(ts)
                })
            }
            Some(Tok::Phrase(mut ts)) => {
                self.at += 1;
                Ok(if ts.len() == 1 {
                    QueryAst::Term(ts.pop().unwrap())
                } else {
                    QueryAst::Phrase(ts)
                })
            }
            Some(Tok::LParen) => {
                let open = self.pos();
                self.at += 1;
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(Error::QueryParse {
                        position: open,
                        message: "unbalanced parenthesis".into(),
                    });
                }
                self.at += 1;
                Ok(inner)
            }
            Some(Tok::RParen) => self.err("unbalanced parenthesis"),
            Some(Tok::And | Tok::Or | Tok::Not) => self.err("dangling operator"),
            None => self.err("expected a term"),
        }
    }
}

fn collapse(mut children: Vec<QueryAst>, wrap: fn(Vec<QueryAst>) -> QueryAst) -> QueryAst {
    if children.len() == 1 {
        children.pop().unwrap()
    } else {
        wrap(children)
    }
}

pub fn parse_query(raw: &str) -> Result<QueryAst> {
    let toks = lex(raw)?;
    if toks.is_empty() {
        return Err(Error::QueryParse {
            position: 0,
            message: "empty query".into(),
        });
    }
    let bag_of_words = !toks
        .iter()
        .any(|(t, _)| matches!(t, Tok::And | Tok::Or | Tok::Not));
    let mut parser = Parser {
        toks,
        at: 0,
        end: raw.chars().count(),
        bag_of_words,
    };
    let ast = parser.or()?;
    if parser.at < parser.toks.len() {
        return parser.err("unbalanced parenthesis");
    }
    if matches!(ast, QueryAst::Not(_)) || ast.positive_leaves().is_empty() {
        return Err(Error::QueryParse {
            position: 0,
            message: "query has no positive term".into(),
        });
    }
    Ok(ast)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(t: &str) -> QueryAst {
        QueryAst::Term(t.into())
    }

    fn phrase(ts: &[&str]) -> QueryAst {
        QueryAst::Phrase(ts.iter().map(|s| s.to_string()).collect())
    }

    fn parse_err(raw: &str) -> (usize, String) {
        match parse_query(raw).unwrap_err() {
            Error::QueryParse { position, message } => (position, message),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn and_with_phrase() {
        assert_eq!(
            parse_query(r#"refund AND "credit card""#).unwrap(),
            QueryAst::And(vec![term("refund"), phrase(&["credit", "card"])])
        );
    }

    #[test]
    fn bag_of_words_is_or() {
        assert_eq!(
            parse_query("upgrade promo").unwrap(),
            QueryAst::Or(vec![term("upgrade"), term("promo")])
        );
        assert_eq!(parse_query("Refund").unwrap(), term("refund"));
    }

    #[test]
    fn explicit_operator_makes_juxtaposition_and() {
        assert_eq!(
            parse_query("upgrade promo OR billing").unwrap(),
            QueryAst::Or(vec![
                QueryAst::And(vec![term("upgrade"), term("promo")]),
                term("billing")
            ])
        );
        assert_eq!(
            parse_query("meeting NOT room").unwrap(),
            QueryAst::And(vec![term("meeting"), QueryAst::Not(Box::new(term("room")))])
        );
    }

    #[test]
    fn parentheses_group() {
        assert_eq!(
            parse_query("(call OR meeting) AND schedule").unwrap(),
            QueryAst::And(vec![
                QueryAst::Or(vec![term("call"), term("meeting")]),
                term("schedule")
            ])
        );
    }

    #[test]
    fn hyphenated_word_becomes_phrase() {
        assert_eq!(parse_query("e-mail").unwrap(), phrase(&["e", "mail"]));
        assert_eq!(parse_query("\"Refund\"").unwrap(), term("refund"));
    }

    #[test]
    fn dangling_operators() {
        assert_eq!(parse_err("AND refund").0, 0);
        assert_eq!(parse_err("refund AND").0, 10);
        assert_eq!(parse_err("refund OR OR x").0, 10);
        assert_eq!(parse_err("NOT NOT x").0, 4);
    }

    #[test]
    fn unbalanced_delimiters() {
        let (pos, msg) = parse_err("refund \"credit card");
        assert_eq!((pos, msg.as_str()), (7, "unbalanced quote"));
        let (pos, msg) = parse_err("(refund OR card");
        assert_eq!((pos, msg.as_str()), (0, "unbalanced parenthesis"));
        assert_eq!(parse_err("refund)").0, 6);
    }

    #[test]
    fn rejects_queries_without_positive_terms() {
        assert!(parse_query("NOT refund").is_err());
        assert!(parse_query("   ").is_err());
        assert!(parse_query("!!!").is_err());
        assert!(parse_query("\"  \"").is_err());
        assert!(parse_query("refund NOT card").is_ok());
    }

    #[test]
    fn positive_terms_skip_negations() {
        let ast = parse_query(r#"refund AND "credit card" NOT fee"#).unwrap();
        assert_eq!(ast.positive_terms(), ["refund", "credit", "card"]);
    }

    #[test]
    fn display_round_trips() {
        for q in ["(a OR b) AND NOT c", r#"x AND "y z""#, "a OR (b AND c)"] {
            let ast = parse_query(q).unwrap();
            assert_eq!(parse_query(&ast.to_string()).unwrap(), ast);
        }
    }
}
