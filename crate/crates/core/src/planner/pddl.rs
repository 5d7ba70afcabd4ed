use std::fmt::Write as _;

use indexmap::IndexSet;
use thiserror::Error;

use super::{Fact, Operator, OperatorKind, PlannerError, PlanningProblem};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PddlError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("action `{0}` has no recognised operator kind")]
    UnknownOperatorKind(String),
    #[error(transparent)]
    Problem(#[from] PlannerError),
}

/// Operator names contain spaces; PDDL names may not.
const SPACE: &str = "__";

fn pddl_name(operator: &str) -> String {
    operator.replace(' ', SPACE)
}

fn operator_name(pddl: &str) -> String {
    pddl.replace(SPACE, " ")
}

fn write_facts(out: &mut String, facts: &[Fact]) {
    out.push_str("(and");
    for f in facts {
        if f.value {
            let _ = write!(out, " ({})", f.proposition);
        } else {
            let _ = write!(out, " (not ({}))", f.proposition);
        }
    }
    out.push(')');
}

/// Grounded PDDL for `p` as `(domain, problem)` text.
pub fn emit_pddl(p: &PlanningProblem) -> (String, String) {
    let negative_pre = p.operators.iter().flat_map(|o| &o.preconditions).chain(&p.goal).any(|f| !f.value);
    let mut domain = String::new();
    let _ = writeln!(domain, "(define (domain {})", p.name);
    if negative_pre {
        domain.push_str("  (:requirements :strips :negative-preconditions)\n");
    } else {
        domain.push_str("  (:requirements :strips)\n");
    }
    domain.push_str("  (:predicates");
    for prop in &p.propositions {
        let _ = write!(domain, "\n    ({prop})");
    }
    domain.push_str(")\n");
    for op in &p.operators {
        let _ = writeln!(domain, "  (:action {}", pddl_name(&op.name));
        domain.push_str("    :parameters ()\n    :precondition ");
        write_facts(&mut domain, &op.preconditions);
        domain.push_str("\n    :effect ");
        write_facts(&mut domain, &op.effects);
        domain.push_str(")\n");
    }
    domain.push_str(")\n");

    let mut problem = String::new();
    let _ = writeln!(problem, "(define (problem {}-problem)", p.name);
    let _ = writeln!(problem, "  (:domain {})", p.name);
    problem.push_str("  (:init");
    for prop in p.propositions.iter().filter(|q| p.initial.get(q) == Some(true)) {
        let _ = write!(problem, "\n    ({prop})");
    }
    problem.push_str(")\n  (:goal ");
    write_facts(&mut problem, &p.goal);
    problem.push_str("))\n");
    (domain, problem)
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            Sexp::List(_) => None,
        }
    }

    fn list(&self) -> Result<&[Sexp], PddlError> {
        match self {
            Sexp::List(l) => Ok(l),
            Sexp::Atom(a) => Err(PddlError::Syntax(format!("expected a list, found `{a}`"))),
        }
    }

    fn head(&self) -> Option<String> {
        match self {
            Sexp::List(l) => l.first().and_then(Sexp::atom).map(str::to_ascii_lowercase),
            Sexp::Atom(_) => None,
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        let line = line.split(';').next().unwrap_or("");
        let spaced = line.replace('(', " ( ").replace(')', " ) ");
        tokens.extend(spaced.split_whitespace().map(str::to_string));
    }
    tokens
}

fn parse_sexp(text: &str) -> Result<Sexp, PddlError> {
    let tokens = tokenize(text);
    let mut stack: Vec<Vec<Sexp>> = Vec::new();
    let mut result = None;
    for tok in tokens {
        if result.is_some() {
            return Err(PddlError::Syntax(format!("trailing input at `{tok}`")));
        }
        match tok.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().ok_or_else(|| PddlError::Syntax("unbalanced `)`".into()))?;
                match stack.last_mut() {
                    Some(parent) => parent.push(Sexp::List(done)),
                    None => result = Some(Sexp::List(done)),
                }
            }
            _ => match stack.last_mut() {
                Some(parent) => parent.push(Sexp::Atom(tok)),
                None => return Err(PddlError::Syntax(format!("atom `{tok}` outside a list"))),
            },
        }
    }
    if !stack.is_empty() {
        return Err(PddlError::Syntax("unbalanced `(`".into()));
    }
    result.ok_or_else(|| PddlError::Syntax("empty input".into()))
}

/// Body of a `(define ...)` form whose header is `(<kind> <name>)`.
fn define_body<'a>(sexp: &'a Sexp, kind: &str) -> Result<(String, &'a [Sexp]), PddlError> {
    let items = sexp.list()?;
    if sexp.head().as_deref() != Some("define") || items.len() < 2 {
        return Err(PddlError::Syntax("expected `(define ...)`".into()));
    }
    let header = items[1].list()?;
    match header {
        [Sexp::Atom(k), Sexp::Atom(name)] if k.eq_ignore_ascii_case(kind) => Ok((name.clone(), &items[2..])),
        _ => Err(PddlError::Syntax(format!("expected `({kind} <name>)` header"))),
    }
}

fn atom_prop(sexp: &Sexp) -> Result<String, PddlError> {
    match sexp.list()? {
        [Sexp::Atom(p)] => Ok(p.clone()),
        _ => Err(PddlError::Unsupported(format!("non-ground or non-atomic formula {sexp:?}"))),
    }
}

fn parse_literal(sexp: &Sexp) -> Result<Fact, PddlError> {
    if sexp.head().as_deref() == Some("not") {
        match sexp.list()? {
            [_, inner] => Ok(Fact::negated(atom_prop(inner)?)),
            _ => Err(PddlError::Syntax("`not` takes one argument".into())),
        }
    } else {
        Ok(Fact::holds(atom_prop(sexp)?))
    }
}

fn parse_conjunction(sexp: &Sexp) -> Result<Vec<Fact>, PddlError> {
    if sexp.head().as_deref() == Some("and") {
        sexp.list()?[1..].iter().map(parse_literal).collect()
    } else {
        Ok(vec![parse_literal(sexp)?])
    }
}

fn parse_action(items: &[Sexp]) -> Result<Operator, PddlError> {
    let name = items
        .get(1)
        .and_then(Sexp::atom)
        .ok_or_else(|| PddlError::Syntax("`:action` without a name".into()))?;
    let name = operator_name(name);
    let kind = OperatorKind::from_operator_name(&name)
        .ok_or_else(|| PddlError::UnknownOperatorKind(name.clone()))?;
    let mut preconditions = Vec::new();
    let mut effects = Vec::new();
    let mut rest = items[2..].iter();
    while let Some(key) = rest.next() {
        let key = key.atom().map(str::to_ascii_lowercase);
        let value = rest.next().ok_or_else(|| PddlError::Syntax(format!("missing value in `{name}`")))?;
        match key.as_deref() {
            Some(":parameters") => {
                if !value.list()?.is_empty() {
                    return Err(PddlError::Unsupported(format!("parameters on `{name}`")));
                }
            }
            Some(":precondition") => preconditions = parse_conjunction(value)?,
            Some(":effect") => effects = parse_conjunction(value)?,
            other => return Err(PddlError::Unsupported(format!("action field {other:?}"))),
        }
    }
    Ok(Operator::new(name, kind, preconditions, effects))
}

/// Inverse of [`emit_pddl`] for the grounded STRIPS subset it produces.
pub fn load_pddl(domain: &str, problem: &str) -> Result<PlanningProblem, PddlError> {
    let domain_sexp = parse_sexp(domain)?;
    let (domain_name, sections) = define_body(&domain_sexp, "domain")?;
    let mut propositions = IndexSet::new();
    let mut operators = Vec::new();
    for section in sections {
        match section.head().as_deref() {
            Some(":requirements") => {
                for req in &section.list()?[1..] {
                    let r = req.atom().unwrap_or_default().to_ascii_lowercase();
                    if r != ":strips" && r != ":negative-preconditions" {
                        return Err(PddlError::Unsupported(format!("requirement `{r}`")));
                    }
                }
            }
            Some(":predicates") => {
                for p in &section.list()?[1..] {
                    propositions.insert(atom_prop(p)?);
                }
            }
            Some(":action") => operators.push(parse_action(section.list()?)?),
            other => return Err(PddlError::Unsupported(format!("domain section {other:?}"))),
        }
    }

    let problem_sexp = parse_sexp(problem)?;
    let (_, sections) = define_body(&problem_sexp, "problem")?;
    let mut initial = Vec::new();
    let mut goal = None;
    for section in sections {
        match section.head().as_deref() {
            Some(":domain") => {
                let named = section.list()?.get(1).and_then(Sexp::atom);
                if named != Some(domain_name.as_str()) {
                    return Err(PddlError::Syntax(format!("problem refers to domain {named:?}")));
                }
            }
            Some(":init") => {
                for f in &section.list()?[1..] {
                    initial.push(atom_prop(f)?);
                }
            }
            Some(":goal") => {
                let body = section.list()?.get(1).ok_or_else(|| PddlError::Syntax("empty `:goal`".into()))?;
                goal = Some(parse_conjunction(body)?);
            }
            other => return Err(PddlError::Unsupported(format!("problem section {other:?}"))),
        }
    }
    if let Some(unknown) = initial.iter().find(|p| !propositions.contains(*p)) {
        return Err(PlannerError::UnknownProposition(unknown.clone()).into());
    }
    let goal = goal.ok_or_else(|| PddlError::Syntax("problem has no `:goal`".into()))?;
    let initial: Vec<&str> = initial.iter().map(String::as_str).collect();
    Ok(PlanningProblem::new(domain_name, propositions, operators, &initial, goal)?)
}
