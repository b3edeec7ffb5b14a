use std::collections::HashMap;

use super::{GapRule, LangError, Program};

/// All ground instances of `rule`, one per assignment of domain constants to
/// its variables. Assignments are enumerated with the first-appearing variable
/// varying slowest and constants in declaration order.
pub fn ground(rule: &GapRule, program: &Program) -> Result<Vec<GapRule>, LangError> {
    let var_domains = program.variable_domains(rule)?;
    let vars = rule.variables();
    if vars.is_empty() {
        return Ok(vec![rule.clone()]);
    }
    let mut choices: Vec<&[String]> = Vec::with_capacity(vars.len());
    for v in &vars {
        let dom_name = var_domains
            .get(v)
            .ok_or_else(|| LangError::UntypedVariable(v.clone()))?;
        let dom = program
            .domain(dom_name)
            .ok_or_else(|| LangError::UnknownDomain(dom_name.clone()))?;
        if dom.constants.is_empty() {
            return Err(LangError::EmptyDomain(v.clone()));
        }
        choices.push(&dom.constants);
    }

    let total: usize = choices.iter().map(|c| c.len()).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; vars.len()];
    loop {
        let binding: HashMap<String, String> = vars
            .iter()
            .zip(&idx)
            .zip(&choices)
            .map(|((v, &i), c)| (v.clone(), c[i].clone()))
            .collect();
        out.push(rule.substitute(&binding));

        // odometer increment, last variable fastest
        let mut pos = vars.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Grounds every rule of the program; TAFs and declarations are kept.
pub fn ground_program(program: &Program) -> Result<Program, LangError> {
    let mut rules = Vec::new();
    for r in &program.rules {
        rules.extend(ground(r, program)?);
    }
    Ok(Program {
        rules,
        ..program.clone()
    })
}
