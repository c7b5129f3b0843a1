//! Parser for the pseudocode listing format.
//!
//! Accepts both the nested form
//!
//! ```text
//! if NOT(AfterTransition):
//!   if F-u > delta-collision, then penalty
//! else:
//!   if S = goal-s, then reward
//! ```
//!
//! and the flat form with `NOT(AfterTransition) AND` / `AfterTransition AND`
//! prefixes. Statements may wrap across lines; `then` is optional.

use super::{Axis, AtomKind, ConditionAtom, ForceSense, RewardProgram, Threshold};
use crate::error::RewardError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Listing {
    pub name: Option<String>,
    pub label: Option<String>,
    pub program: RewardProgram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Both,
    Pre,
    Post,
}

struct Statement {
    line: usize,
    indent: usize,
    text: String,
}

fn err(line: usize, message: impl Into<String>) -> RewardError {
    RewardError::Syntax {
        line,
        message: message.into(),
    }
}

fn statements(text: &str) -> (Option<(usize, String)>, Vec<Statement>) {
    let mut header = None;
    let mut out: Vec<Statement> = Vec::new();
    let mut open: Option<Statement> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if open.is_none() && header.is_none() && out.is_empty() && trimmed.starts_with("Reward ") {
            header = Some((line, trimmed.to_string()));
            continue;
        }
        let stmt = open.get_or_insert_with(|| Statement {
            line,
            indent: raw.len() - raw.trim_start().len(),
            text: String::new(),
        });
        if !stmt.text.is_empty() {
            stmt.text.push(' ');
        }
        stmt.text.push_str(trimmed);
        let t = stmt.text.as_str();
        if t.ends_with(':') || t.ends_with("penalty") || t.ends_with("reward") {
            out.extend(open.take());
        }
    }
    out.extend(open);
    (header, out)
}

fn parse_header(line: usize, text: &str) -> Result<(String, Option<String>), RewardError> {
    let rest = text["Reward ".len()..].trim();
    let (name, tail) = match rest.find(char::is_whitespace) {
        Some(i) => (&rest[..i], rest[i..].trim()),
        None => (rest, ""),
    };
    if name.is_empty() {
        return Err(err(line, "missing skill name"));
    }
    let label = tail
        .strip_prefix('(')
        .and_then(|t| t.split_whitespace().next())
        .map(str::to_string);
    Ok((name.to_string(), label))
}

fn parse_atom(line: usize, raw: &str) -> Result<ConditionAtom, RewardError> {
    let s: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || err(line, format!("cannot parse condition `{}`", raw.trim()));
    let axis_of = |c: Option<char>| c.and_then(Axis::from_char).ok_or_else(bad);

    if let Some(rest) = s.strip_prefix('F') {
        let mut chars = rest.chars();
        let sense = match chars.next() {
            Some('-') => ForceSense::Opposing,
            Some('+') => ForceSense::Along,
            _ => return Err(bad()),
        };
        let axis_char = chars.next().ok_or_else(bad)?;
        if !axis_char.is_ascii_lowercase() {
            return Err(bad());
        }
        let axis = axis_of(Some(axis_char))?;
        let rest: String = chars.collect();
        let (above, level) = if let Some(l) = rest.strip_prefix('>') {
            (true, l)
        } else if let Some(l) = rest.strip_prefix('<') {
            (false, l)
        } else {
            return Err(bad());
        };
        let threshold = match level {
            "delta-zero" => Threshold::Zero,
            "delta-collision" => Threshold::Collision,
            _ => return Err(bad()),
        };
        let kind = if above {
            AtomKind::ForceAbove(sense, threshold)
        } else {
            AtomKind::ForceBelow(sense, threshold)
        };
        return Ok(ConditionAtom::new(axis, kind));
    }

    if let Some(inner) = s.strip_prefix('|') {
        let (body, tail) = inner.split_once('|').ok_or_else(bad)?;
        if tail != ">delta-gap" {
            return Err(bad());
        }
        let (x, feature) = body.split_once('-').ok_or_else(bad)?;
        let axis = axis_of(x.chars().next().filter(|c| c.is_ascii_uppercase() && x.len() == 1))?;
        if feature != format!("feature-{}", axis.lower()) {
            return Err(bad());
        }
        return Ok(ConditionAtom::gap(axis));
    }

    if let Some((x, goal)) = s.split_once('=') {
        let axis = axis_of(x.chars().next().filter(|c| c.is_ascii_uppercase() && x.len() == 1))?;
        if goal != format!("goal-{}", axis.lower()) {
            return Err(bad());
        }
        return Ok(ConditionAtom::goal(axis));
    }
    Err(bad())
}

fn split_and(text: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut current = Vec::new();
    for word in text.split_whitespace() {
        if word.eq_ignore_ascii_case("and") {
            parts.push(current.join(" "));
            current.clear();
        } else {
            current.push(word);
        }
    }
    parts.push(current.join(" "));
    parts
}

/// Parses one listing. The `Reward NAME (...)` header line is optional.
pub fn parse_listing(text: &str) -> Result<Listing, RewardError> {
    let (header, stmts) = statements(text);
    let (name, label) = match header {
        Some((line, h)) => {
            let (n, l) = parse_header(line, &h)?;
            (Some(n), l)
        }
        None => (None, None),
    };

    let mut program = RewardProgram::default();
    // Open block: (indent of its opening statement, stage of its body).
    let mut block: Option<(usize, Stage)> = None;
    let mut saw_pre_block = false;

    for st in &stmts {
        if let Some((indent, _)) = block {
            if st.indent <= indent {
                block = None;
            }
        }
        let t = st.text.as_str();
        if t == "if NOT(AfterTransition):" {
            if block.is_some() {
                return Err(err(st.line, "nested stage block"));
            }
            block = Some((st.indent, Stage::Pre));
            saw_pre_block = true;
            continue;
        }
        if t == "else:" {
            if !saw_pre_block || block.is_some() {
                return Err(err(st.line, "`else:` without a preceding stage block"));
            }
            block = Some((st.indent, Stage::Post));
            saw_pre_block = false;
            continue;
        }

        let body = t
            .strip_prefix("if ")
            .ok_or_else(|| err(st.line, format!("expected `if`, found `{t}`")))?;
        let (conds, is_reward) = if let Some(c) = body.strip_suffix("penalty") {
            (c, false)
        } else if let Some(c) = body.strip_suffix("reward") {
            (c, true)
        } else {
            return Err(err(st.line, "statement must end in `penalty` or `reward`"));
        };
        let conds = conds.trim_end();
        let conds = conds.strip_suffix("then").unwrap_or(conds).trim_end();
        let conds = conds.strip_suffix(',').unwrap_or(conds);

        let mut stage = block.map(|(_, s)| s).unwrap_or(Stage::Both);
        let mut atoms = Vec::new();
        for (i, part) in split_and(conds).iter().enumerate() {
            match part.as_str() {
                "NOT(AfterTransition)" if i == 0 && stage == Stage::Both => stage = Stage::Pre,
                "AfterTransition" if i == 0 && stage == Stage::Both => stage = Stage::Post,
                p => atoms.push(parse_atom(st.line, p)?),
            }
        }
        if atoms.is_empty() {
            return Err(err(st.line, "statement has no conditions"));
        }

        if is_reward {
            program.reward.extend(atoms);
        } else {
            if atoms.len() != 1 {
                return Err(err(st.line, "a penalty takes exactly one condition"));
            }
            let atom = atoms[0];
            if stage != Stage::Post {
                program.pre_penalties.insert(atom);
            }
            if stage != Stage::Pre {
                program.post_penalties.insert(atom);
            }
        }
    }
    Ok(Listing {
        name,
        label,
        program,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{compose, lookup};

    #[test]
    fn nested_and_flat_forms_agree() {
        let nested = "\
if F-t > delta-collision, then penalty
if NOT(AfterTransition):
  if |U - feature-u| > delta-gap,
    then penalty
else:
  if F-u > delta-collision, then penalty
  if S = goal-s, then reward
";
        let flat = "\
if F-t > delta-collision, then penalty
if NOT(AfterTransition) AND
   |U - feature-u| > delta-gap,
  then penalty
if AfterTransition AND F-u > delta-collision, then penalty
if S = goal-s, then reward
";
        let a = parse_listing(nested).unwrap().program;
        let b = parse_listing(flat).unwrap().program;
        assert_eq!(a, b);
        assert!(a.is_staged());
    }

    #[test]
    fn header_and_optional_then() {
        let l = parse_listing(
            "Reward PR-OP (PTG33 (Drawer-close) task)\n  if F-t > delta-collision, penalty\n  if F-s > delta-zero, reward\n",
        )
        .unwrap();
        assert_eq!(l.name.as_deref(), Some("PR-OP"));
        assert_eq!(l.label.as_deref(), Some("PTG33"));
        assert_eq!(l.program.reward.len(), 1);
    }

    #[test]
    fn lowercase_and() {
        let l = parse_listing("if F+s < delta-zero and S = goal-s,\n  then reward\n").unwrap();
        assert_eq!(l.program.reward.len(), 2);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_listing("if F-x > delta-zero, then penalty").is_err());
        assert!(parse_listing("if S = goal-t, then reward").is_err());
        assert!(parse_listing("if F-s > delta-zeron, then reward").is_err());
        assert!(parse_listing("else:\n  if S = goal-s, then reward").is_err());
        assert!(parse_listing("when S = goal-s, then reward").is_err());
    }

    #[test]
    fn printer_round_trips() {
        for spec in crate::reward::registry() {
            let program = compose(spec).unwrap();
            let text = format!("{}\n{}", spec.header(), program);
            let parsed = parse_listing(&text).unwrap();
            assert_eq!(parsed.program, program, "{}", spec.name);
            assert_eq!(parsed.name.as_deref(), Some(spec.name));
        }
        assert!(lookup("PR-PR").is_ok());
    }
}
