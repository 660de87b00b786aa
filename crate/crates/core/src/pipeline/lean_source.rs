//! Seed theorems from `.lean` source: `theorem name (binders) : goal := by`
//! followed by one tactic per line.

use std::path::Path;

use crate::record::{normalize_text, Premise, TacticStep, TheoremRecord};

fn split_binders(s: &str) -> Option<(Vec<String>, &str)> {
    let mut groups = Vec::new();
    let mut rest = s.trim_start();
    while let Some(open) = rest.chars().next().filter(|c| matches!(c, '(' | '{' | '[' | '⦃')) {
        let close = match open {
            '(' => ')',
            '{' => '}',
            '[' => ']',
            _ => '⦄',
        };
        let mut depth = 0usize;
        let mut end = None;
        for (i, ch) in rest.char_indices() {
            if ch == open {
                depth += 1;
            } else if ch == close {
                depth -= 1;
                if depth == 0 {
                    end = Some(i);
                    break;
                }
            }
        }
        let end = end?;
        groups.push(rest[open.len_utf8()..end].to_string());
        rest = rest[end + close.len_utf8()..].trim_start();
    }
    Some((groups, rest))
}

fn premises_of(group: &str) -> Vec<Premise> {
    match group.split_once(':') {
        Some((names, ty)) => names
            .split_whitespace()
            .map(|n| Premise::new(n, normalize_text(ty)))
            .collect(),
        // instance binder without a name
        None => vec![Premise::new("_inst", normalize_text(group))],
    }
}

fn parse_block(block: &str, imports: &[String]) -> Option<TheoremRecord> {
    let (header, body) = block.split_once(":= by")?;
    let header = header.trim();
    let rest = header
        .strip_prefix("theorem ")
        .or_else(|| header.strip_prefix("lemma "))?;
    let (name, rest) = rest.trim_start().split_once(char::is_whitespace)?;
    let (groups, rest) = split_binders(rest)?;
    let goal = rest.trim_start().strip_prefix(':')?;
    let mut proof: Vec<String> = Vec::new();
    let mut base_indent = None;
    for line in body.lines() {
        let text = line.trim();
        if text.is_empty() || text.starts_with("--") {
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        match (base_indent, proof.last_mut()) {
            (Some(b), Some(last)) if indent > b => {
                last.push(' ');
                last.push_str(text);
            }
            _ => {
                base_indent.get_or_insert(indent);
                proof.push(text.to_string());
            }
        }
    }
    let mut rec = TheoremRecord::seed(
        name,
        groups.iter().flat_map(|g| premises_of(g)).collect(),
        &normalize_text(goal),
        proof.iter().map(|t| TacticStep::parse(t)).collect(),
    );
    rec.imports = imports.to_vec();
    Some(rec)
}

/// Every theorem in one source file; `import` and `open` lines apply to
/// all of them.
pub fn parse_lean_source(text: &str) -> Vec<TheoremRecord> {
    let mut imports = Vec::new();
    let mut blocks: Vec<String> = Vec::new();
    for line in text.lines() {
        let t = line.trim_start();
        if blocks.is_empty() && (t.starts_with("import ") || t.starts_with("open ")) {
            imports.push(line.trim().to_string());
        } else if t.starts_with("theorem ") || t.starts_with("lemma ") {
            blocks.push(format!("{line}\n"));
        } else if let Some(b) = blocks.last_mut() {
            b.push_str(line);
            b.push('\n');
        }
    }
    blocks.iter().filter_map(|b| parse_block(b, &imports)).collect()
}

/// All `.lean` files directly under `dir`, in file-name order.
pub fn read_lean_dir(dir: &Path) -> std::io::Result<Vec<TheoremRecord>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "lean"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(parse_lean_source(&std::fs::read_to_string(&f)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sum_mul_congr;

    #[test]
    fn round_trips_rendered_records() {
        let rec = sum_mul_congr();
        let parsed = parse_lean_source(&rec.to_lean());
        assert_eq!(parsed, vec![rec]);
    }

    #[test]
    fn grouped_binders_and_imports() {
        let src = "import Mathlib\nopen Finset Nat\n\ntheorem t {a b : ℕ} (h : a = b) : b = a := by\n  rw [h]\n\nlemma u (x : ℕ) : x = x := by\n  rfl\n";
        let ts = parse_lean_source(src);
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].imports, vec!["import Mathlib", "open Finset Nat"]);
        let names: Vec<&str> = ts[0].premises.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "h"]);
        assert_eq!(ts[0].goal, "b = a");
        assert_eq!(ts[1].proof.len(), 1);
    }
}
