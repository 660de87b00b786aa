use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{add, parse_expr, sub, Expr, ParseError, Rewrite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Usable forwards by `rw` and by `simp`.
    Ltr,
    /// Usable by `rw` in both directions (`rw [← name]`); never by `simp`.
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum RuleBody {
    Pattern { forward: Rewrite, backward: Rewrite },
    /// `∑ k in Ico a b, f k` to `∑ k in range (b - a), f (a + k)` for `a ≠ 0`.
    SumShift,
}

/// A named rewrite lemma of the mock backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteRule {
    pub name: String,
    pub direction: Direction,
    body: RuleBody,
}

#[derive(Debug, Error)]
pub enum RuleTableError {
    #[error("rule `{name}`: {source}")]
    Parse {
        name: String,
        #[source]
        source: ParseError,
    },
    #[error("rule `{name}`: pattern variables {detail}")]
    Variables { name: String, detail: String },
    #[error("reading rule table: {0}")]
    Io(#[from] std::io::Error),
    #[error("rule table json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    name: String,
    lhs: String,
    rhs: String,
    direction: Direction,
}

fn metas(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    e.metas(&mut out);
    out
}

impl RewriteRule {
    pub fn pattern(name: &str, lhs: &str, rhs: &str, direction: Direction) -> Result<Self, RuleTableError> {
        let parse = |src: &str| {
            parse_expr(src).map_err(|source| RuleTableError::Parse {
                name: name.to_string(),
                source,
            })
        };
        let lhs = parse(lhs)?;
        let rhs = parse(rhs)?;
        let (lv, rv) = (metas(&lhs), metas(&rhs));
        let ok = match direction {
            Direction::Ltr => rv.is_subset(&lv),
            Direction::Both => rv == lv,
        };
        if !ok || matches!(lhs, Expr::Meta(_)) {
            return Err(RuleTableError::Variables {
                name: name.to_string(),
                detail: format!("lhs {lv:?} vs rhs {rv:?} do not fit direction {direction:?}"),
            });
        }
        Ok(Self {
            name: name.to_string(),
            direction,
            body: RuleBody::Pattern {
                forward: Rewrite {
                    from: lhs.clone(),
                    to: rhs.clone(),
                },
                backward: Rewrite { from: rhs, to: lhs },
            },
        })
    }

    fn sum_shift() -> Self {
        Self {
            name: "sum_shift".into(),
            direction: Direction::Ltr,
            body: RuleBody::SumShift,
        }
    }

    /// Apply at the root of `e` only.
    pub fn apply_at(&self, e: &Expr, reverse: bool) -> Option<Expr> {
        match &self.body {
            RuleBody::Pattern { forward, backward } => {
                if reverse {
                    if self.direction != Direction::Both {
                        return None;
                    }
                    backward.apply_at(e)
                } else {
                    forward.apply_at(e)
                }
            }
            RuleBody::SumShift => {
                if reverse {
                    return None;
                }
                let Expr::Sum { var, lo, hi, body } = e else {
                    return None;
                };
                if **lo == Expr::Num(0) || lo.has_free_var(var) {
                    return None;
                }
                let shifted = body.substitute(var, &add((**lo).clone(), Expr::Var(var.clone())))?;
                Some(Expr::Sum {
                    var: var.clone(),
                    lo: Box::new(Expr::Num(0)),
                    hi: Box::new(sub((**hi).clone(), (**lo).clone())),
                    body: Box::new(shifted),
                })
            }
        }
    }

    /// Head symbol of the side this rule rewrites from.
    pub fn source_head(&self, reverse: bool) -> String {
        match &self.body {
            RuleBody::Pattern { forward, backward } => {
                if reverse {
                    backward.from.head_symbol()
                } else {
                    forward.from.head_symbol()
                }
            }
            RuleBody::SumShift => "∑".into(),
        }
    }
}

/// The lemma set available to `rw` and `simp`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    rules: Vec<RewriteRule>,
}

const DEFAULT_RULES: &[(&str, &str, &str, Direction)] = &[
    ("add_zero", "?a + 0", "?a", Direction::Ltr),
    ("zero_add", "0 + ?a", "?a", Direction::Ltr),
    ("mul_one", "?a * 1", "?a", Direction::Ltr),
    ("one_mul", "1 * ?a", "?a", Direction::Ltr),
    ("sub_self", "?a - ?a", "0", Direction::Ltr),
    ("sub_zero", "?a - 0", "?a", Direction::Ltr),
    ("add_sub_cancel", "?a + ?b - ?b", "?a", Direction::Ltr),
    ("add_sub_cancel_left", "?a + ?b - ?a", "?b", Direction::Ltr),
    ("div_one", "?a / 1", "?a", Direction::Ltr),
    ("add_comm", "?a + ?b", "?b + ?a", Direction::Both),
    ("mul_comm", "?a * ?b", "?b * ?a", Direction::Both),
    ("add_assoc", "?a + ?b + ?c", "?a + (?b + ?c)", Direction::Both),
    ("mul_assoc", "?a * ?b * ?c", "?a * (?b * ?c)", Direction::Both),
    ("two_mul", "2 * ?a", "?a + ?a", Direction::Both),
    ("mul_sum", "?c * ∑ ?k in Ico ?lo ?hi, ?f", "∑ ?k in Ico ?lo ?hi, ?c * ?f", Direction::Both),
    ("add_mul", "(?a + ?b) * ?c", "?a * ?c + ?b * ?c", Direction::Both),
    ("mul_add", "?a * (?b + ?c)", "?a * ?b + ?a * ?c", Direction::Both),
];

impl Default for RuleTable {
    fn default() -> Self {
        let mut rules: Vec<RewriteRule> = DEFAULT_RULES
            .iter()
            .map(|(name, lhs, rhs, dir)| RewriteRule::pattern(name, lhs, rhs, *dir).expect("builtin rule parses"))
            .collect();
        rules.push(RewriteRule::sum_shift());
        Self { rules }
    }
}

impl RuleTable {
    pub fn empty() -> Self {
        Self { rules: Vec::new() }
    }

    /// Insert or replace a rule by name.
    pub fn insert(&mut self, rule: RewriteRule) {
        match self.rules.iter_mut().find(|r| r.name == rule.name) {
            Some(slot) => *slot = rule,
            None => self.rules.push(rule),
        }
    }

    /// Extend the table with rules from a JSON array of
    /// `{name, lhs, rhs, direction}` objects.
    pub fn extend_from_json(&mut self, json: &str) -> Result<(), RuleTableError> {
        let specs: Vec<RuleSpec> = serde_json::from_str(json)?;
        for spec in specs {
            self.insert(RewriteRule::pattern(&spec.name, &spec.lhs, &spec.rhs, spec.direction)?);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RuleTableError> {
        let mut table = Self::default();
        table.extend_from_json(&std::fs::read_to_string(path)?)?;
        Ok(table)
    }

    pub fn get(&self, name: &str) -> Option<&RewriteRule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    pub fn simp_rules(&self) -> impl Iterator<Item = &RewriteRule> {
        self.rules.iter().filter(|r| r.direction == Direction::Ltr)
    }

    /// Every `rw` tactic the table admits, forward then reversed.
    pub fn rewrite_tactics(&self) -> Vec<String> {
        let mut out: Vec<String> = self.rules.iter().map(|r| format!("rw [{}]", r.name)).collect();
        for r in &self.rules {
            if r.direction == Direction::Both && !r.name.ends_with("_comm") {
                out.push(format!("rw [← {}]", r.name));
            }
        }
        out
    }
}
