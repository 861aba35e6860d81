//! Template-based natural-language descriptions of clauses and rules.

use crate::catalog::{placeholders, Catalog, Definition};
use crate::rule::{Clause, Rule};

/// The clause sentence without its final period.
pub fn clause_phrase(clause: &Clause, catalog: &Catalog) -> String {
    let Ok(def) = catalog.lookup(clause.kind, &clause.owner_id, &clause.condition_id) else {
        return format!("{} {}", clause.owner_id, clause.condition_id);
    };
    fill(def, clause)
}

fn fill(def: Definition<'_>, clause: &Clause) -> String {
    let template = def.template();
    let mut out = String::with_capacity(template.len() + 32);
    let mut last = 0;
    for (range, attr_id) in placeholders(template) {
        out.push_str(&template[last..range.start]);
        let value = clause.value(attr_id);
        if value.trim().is_empty() {
            let label = def.attribute(attr_id).map(|a| a.label.to_lowercase()).unwrap_or_else(|| attr_id.to_string());
            out.push('<');
            out.push_str(&label);
            out.push('>');
        } else {
            out.push_str(value);
        }
        last = range.end;
    }
    out.push_str(&template[last..]);
    out
}

pub fn render_clause(clause: &Clause, catalog: &Catalog) -> String {
    format!("{}.", clause_phrase(clause, catalog))
}

pub fn render_rule(rule: &Rule, catalog: &Catalog) -> String {
    let side = |clauses: &[Clause]| {
        if clauses.is_empty() {
            "<nothing>".to_string()
        } else {
            clauses
                .iter()
                .map(|c| clause_phrase(c, catalog))
                .collect::<Vec<_>>()
                .join(" and ")
        }
    };
    format!("IF {} THEN {}.", side(&rule.ifs), side(&rule.thens))
}
