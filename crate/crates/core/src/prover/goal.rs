use std::fmt;

use crate::expr::{parse_prop, Expr, ParseError, Prop};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum HypKind {
    /// A variable declaration such as `x : ℕ`.
    Type(String),
    Prop(Prop),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hyp {
    pub name: String,
    pub kind: HypKind,
}

/// One open goal: hypotheses in context order plus the target.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Goal {
    pub hyps: Vec<Hyp>,
    pub target: Prop,
}

/// Split `lhs : rhs` at the first colon outside parentheses.
fn split_top_colon(line: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (idx, c) in line.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ':' if depth == 0 => return Some((&line[..idx], &line[idx + 1..])),
            _ => {}
        }
    }
    None
}

impl Hyp {
    pub fn from_premise(name: &str, type_expr: &str) -> Result<Hyp, ParseError> {
        let kind = if looks_like_prop(type_expr) {
            HypKind::Prop(parse_prop(type_expr)?)
        } else {
            HypKind::Type(crate::record::normalize_text(type_expr))
        };
        Ok(Hyp {
            name: name.to_string(),
            kind,
        })
    }

    pub fn prop(&self) -> Option<&Prop> {
        match &self.kind {
            HypKind::Prop(p) => Some(p),
            HypKind::Type(_) => None,
        }
    }
}

fn looks_like_prop(text: &str) -> bool {
    let mut depth = 0i32;
    for c in text.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            '=' | '≠' | '≤' | '<' | '≥' | '>' if depth == 0 => return true,
            _ => {}
        }
    }
    false
}

impl Goal {
    pub fn parse(text: &str) -> Result<Goal, ParseError> {
        if !text.contains('⊢') {
            return Ok(Goal {
                hyps: Vec::new(),
                target: parse_prop(text.trim())?,
            });
        }
        let mut hyps = Vec::new();
        let mut target = None;
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with("case ") {
                continue;
            }
            if let Some(rest) = line.strip_prefix('⊢') {
                target = Some(parse_prop(rest.trim())?);
                continue;
            }
            let (names, ty) = split_top_colon(line).ok_or(ParseError::Unexpected(line.to_string()))?;
            for name in names.split_whitespace() {
                hyps.push(Hyp::from_premise(name, ty.trim())?);
            }
        }
        let target = target.ok_or(ParseError::Eof)?;
        Ok(Goal { hyps, target })
    }

    pub fn hyp(&self, name: &str) -> Option<&Hyp> {
        self.hyps.iter().rev().find(|h| h.name == name)
    }

    pub fn hyp_mut(&mut self, name: &str) -> Option<&mut Hyp> {
        self.hyps.iter_mut().rev().find(|h| h.name == name)
    }

    pub fn prop_hyps(&self) -> impl Iterator<Item = (&str, &Prop)> {
        self.hyps.iter().filter_map(|h| h.prop().map(|p| (h.name.as_str(), p)))
    }

    /// Every expression occurring in the goal, target sides first.
    pub fn exprs(&self) -> Vec<&Expr> {
        let mut out: Vec<&Expr> = self.target.sides().to_vec();
        for (_, p) in self.prop_hyps() {
            out.extend(p.sides());
        }
        out
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for h in &self.hyps {
            match &h.kind {
                HypKind::Type(t) => writeln!(f, "{} : {}", h.name, t)?,
                HypKind::Prop(p) => writeln!(f, "{} : {}", h.name, p)?,
            }
        }
        write!(f, "⊢ {}", self.target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_text_round_trip() {
        let text = "x y : ℕ\nh : x + 0 = y\n⊢ x = y";
        let g = Goal::parse(text).unwrap();
        assert_eq!(g.hyps.len(), 3);
        assert_eq!(g.to_string(), "x : ℕ\ny : ℕ\nh : x + 0 = y\n⊢ x = y");
        assert_eq!(Goal::parse(&g.to_string()).unwrap(), g);
    }

    #[test]
    fn bare_target_parses() {
        let g = Goal::parse("x + 0 = x").unwrap();
        assert!(g.hyps.is_empty());
        assert_eq!(g.to_string(), "⊢ x + 0 = x");
    }

    #[test]
    fn ascription_colon_is_not_a_hypothesis_separator() {
        let g = Goal::parse("h : (-1 : ℤ) * x = x\n⊢ x = x").unwrap();
        assert_eq!(g.hyps.len(), 1);
        assert!(g.hyps[0].prop().is_some());
    }
}
