//! Text formats for reaction networks and experiment configurations.
//!
//! Network files declare species on one line and then list one reaction per
//! line:
//!
//! ```text
//! # birth / conversion / death
//! species A B C
//! 0 -> A @ 0.1
//! A -> B @ 100 fast
//! 2 S2 + S3 -> 3 S4 @ 2 fast
//! ```
//!
//! `0` is the empty complex, coefficients run from 1 to 9 and may be written
//! with or without a space (`2S2`), and reactions are slow unless marked
//! `fast`. Configuration files are `key = value` lines; see
//! [`parse_experiment`] for the keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{ObservableSpec, Propensity, Reaction, ReactionNetwork};

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim()
}

/// Parses one side of a reaction into `(species index, coefficient)` pairs,
/// merging repeated species.
fn parse_complex(side: &str, species: &[String], line: usize) -> Result<Vec<(usize, u32)>> {
    let side = side.trim();
    if side == "0" {
        return Ok(Vec::new());
    }
    if side.is_empty() {
        return Err(Error::parse(line, "empty complex; write `0` for nothing"));
    }
    let mut out: Vec<(usize, u32)> = Vec::new();
    for term in side.split('+') {
        let term = term.trim();
        let digits = term.chars().take_while(|c| c.is_ascii_digit()).count();
        let (coef, name) = if digits == 0 {
            (1, term)
        } else {
            let c: u32 = term[..digits]
                .parse()
                .map_err(|_| Error::parse(line, format!("bad coefficient in `{term}`")))?;
            (c, term[digits..].trim())
        };
        if !(1..=9).contains(&coef) {
            return Err(Error::parse(
                line,
                format!("coefficient {coef} in `{term}` is outside 1..=9"),
            ));
        }
        if !is_identifier(name) {
            return Err(Error::parse(line, format!("malformed term `{term}`")));
        }
        let idx = species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::parse(line, format!("undeclared species `{name}`")))?;
        match out.iter_mut().find(|(s, _)| *s == idx) {
            Some((_, c)) => *c += coef,
            None => out.push((idx, coef)),
        }
    }
    Ok(out)
}

fn parse_reaction(text: &str, species: &[String], line: usize) -> Result<(Reaction, bool)> {
    let (lhs, rest) = text
        .split_once("->")
        .ok_or_else(|| Error::parse(line, "expected `reactants -> products @ rate`"))?;
    let (rhs, tail) = rest
        .split_once('@')
        .ok_or_else(|| Error::parse(line, "missing `@ rate`"))?;
    let mut tail = tail.split_whitespace();
    let rate_text = tail
        .next()
        .ok_or_else(|| Error::parse(line, "missing rate constant"))?;
    let rate: f64 = rate_text
        .parse()
        .map_err(|_| Error::parse(line, format!("bad rate constant `{rate_text}`")))?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::parse(line, format!("rate constant must be positive, got {rate}")));
    }
    let slow = match tail.next() {
        None | Some("slow") => true,
        Some("fast") => false,
        Some(other) => {
            return Err(Error::parse(
                line,
                format!("expected `slow` or `fast`, got `{other}`"),
            ))
        }
    };
    if let Some(extra) = tail.next() {
        return Err(Error::parse(line, format!("unexpected trailing `{extra}`")));
    }
    let reactants = parse_complex(lhs, species, line)?;
    let products = parse_complex(rhs, species, line)?;
    let mut eta = vec![0i64; species.len()];
    for &(s, c) in &products {
        eta[s] += i64::from(c);
    }
    for &(s, c) in &reactants {
        eta[s] -= i64::from(c);
    }
    if eta.iter().all(|&d| d == 0) {
        log::warn!("line {line}: reaction `{}` changes no species", text.trim());
    }
    let propensity = match reactants.as_slice() {
        [] => Propensity::Constant(rate),
        [(s, 1)] => Propensity::Linear {
            rate,
            species: *s,
        },
        _ => Propensity::MassAction { rate, reactants },
    };
    Ok((Reaction::new(propensity, eta), slow))
}

pub fn parse_network(text: &str) -> Result<ReactionNetwork> {
    let mut species: Option<Vec<String>> = None;
    let mut reactions = Vec::new();
    let mut slow = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        if body.split_whitespace().next() == Some("species") {
            let rest = &body["species".len()..];
            if species.is_some() {
                return Err(Error::parse(line, "species declared twice"));
            }
            let names: Vec<String> = rest.split_whitespace().map(str::to_owned).collect();
            if names.is_empty() {
                return Err(Error::parse(line, "species list is empty"));
            }
            for (k, n) in names.iter().enumerate() {
                if !is_identifier(n) {
                    return Err(Error::parse(line, format!("invalid species name `{n}`")));
                }
                if names[..k].contains(n) {
                    return Err(Error::parse(line, format!("species `{n}` declared twice")));
                }
            }
            species = Some(names);
            continue;
        }
        let names = species
            .as_ref()
            .ok_or_else(|| Error::parse(line, "reaction before the species declaration"))?;
        let (r, s) = parse_reaction(body, names, line)?;
        reactions.push(r);
        slow.push(s);
    }
    let species = species.ok_or_else(|| Error::parse(0, "no species declaration"))?;
    if reactions.is_empty() {
        return Err(Error::parse(0, "no reactions"));
    }
    ReactionNetwork::new(species, reactions, slow)
}

fn write_complex(out: &mut String, terms: &[(usize, u32)], species: &[String]) {
    if terms.is_empty() {
        out.push('0');
        return;
    }
    for (k, &(s, c)) in terms.iter().enumerate() {
        if k > 0 {
            out.push_str(" + ");
        }
        if c > 1 {
            let _ = write!(out, "{c} ");
        }
        out.push_str(&species[s]);
    }
}

/// Inverse of [`parse_network`] for networks whose products are non-negative
/// and whose coefficients fit the grammar.
pub fn network_to_text(net: &ReactionNetwork) -> Result<String> {
    let species = net.species();
    let mut out = String::from("species");
    for s in species {
        out.push(' ');
        out.push_str(s);
    }
    out.push('\n');
    for (j, r) in net.reactions().iter().enumerate() {
        let reactants = r.propensity.reactants();
        let mut products = r.state_change.clone();
        for &(s, c) in &reactants {
            products[s] += i64::from(c);
        }
        let mut prod_terms = Vec::new();
        for (s, &c) in products.iter().enumerate() {
            if !(0..=9).contains(&c) {
                return Err(Error::Input(format!(
                    "reaction {} cannot be written: product coefficient {c}",
                    j + 1
                )));
            }
            if c > 0 {
                prod_terms.push((s, c as u32));
            }
        }
        write_complex(&mut out, &reactants, species);
        out.push_str(" -> ");
        write_complex(&mut out, &prod_terms, species);
        let _ = write!(out, " @ {}", r.propensity.rate_constant());
        out.push_str(if net.is_slow(j) { "\n" } else { " fast\n" });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Ssa,
    CtmcParRep,
    EmbeddedParRep,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ssa => "ssa",
            Algorithm::CtmcParRep => "ctmc-parrep",
            Algorithm::EmbeddedParRep => "embedded-parrep",
        }
    }

    fn parse(s: &str, line: usize) -> Result<Self> {
        match s {
            "ssa" => Ok(Algorithm::Ssa),
            "ctmc-parrep" => Ok(Algorithm::CtmcParRep),
            "embedded-parrep" => Ok(Algorithm::EmbeddedParRep),
            _ => Err(Error::parse(line, format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DephasingKind {
    Rejection,
    FlemingViot,
}

impl DephasingKind {
    pub fn name(self) -> &'static str {
        match self {
            DephasingKind::Rejection => "rejection",
            DephasingKind::FlemingViot => "fleming-viot",
        }
    }

    fn parse(s: &str, line: usize) -> Result<Self> {
        match s {
            "rejection" => Ok(DephasingKind::Rejection),
            "fleming-viot" => Ok(DephasingKind::FlemingViot),
            _ => Err(Error::parse(line, format!("unknown dephasing `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Thresholds {
    Time { t_c: f64, t_p: f64 },
    Steps { n_c: u64, n_p: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    Time(f64),
    Steps(u64),
}

/// Affine expression over species names, e.g. `A + 2 B - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableExpr {
    pub terms: Vec<(String, f64)>,
    pub constant: f64,
}

impl ObservableExpr {
    pub fn parse(text: &str, line: usize) -> Result<Self> {
        let bad = || Error::parse(line, format!("malformed expression `{text}`"));
        let tokens = tokenize(text).ok_or_else(bad)?;
        let mut terms: Vec<(String, f64)> = Vec::new();
        let mut constant = 0.0;
        let mut i = 0;
        let mut first = true;
        while i < tokens.len() {
            let mut sign = 1.0;
            match tokens[i] {
                Token::Plus | Token::Minus => {
                    if tokens[i] == Token::Minus {
                        sign = -1.0;
                    }
                    i += 1;
                }
                _ if !first => return Err(bad()),
                _ => {}
            }
            first = false;
            match (tokens.get(i), tokens.get(i + 1), tokens.get(i + 2)) {
                (Some(Token::Num(c)), Some(Token::Star), Some(Token::Ident(n))) => {
                    push_term(&mut terms, n, sign * c);
                    i += 3;
                }
                (Some(Token::Num(c)), Some(Token::Ident(n)), _) => {
                    push_term(&mut terms, n, sign * c);
                    i += 2;
                }
                (Some(Token::Num(c)), _, _) => {
                    constant += sign * c;
                    i += 1;
                }
                (Some(Token::Ident(n)), _, _) => {
                    push_term(&mut terms, n, sign);
                    i += 1;
                }
                _ => return Err(bad()),
            }
        }
        if first {
            return Err(Error::parse(line, "empty observable expression"));
        }
        Ok(ObservableExpr { terms, constant })
    }

    /// Resolves species names against a network.
    pub fn resolve(&self, species: &[String]) -> Result<ObservableSpec> {
        let mut w = vec![0.0; species.len()];
        for (name, c) in &self.terms {
            let i = species
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::Input(format!("observable uses undeclared species `{name}`")))?;
            w[i] += c;
        }
        let nonzero: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
        Ok(if nonzero.is_empty() {
            ObservableSpec::Constant(self.constant)
        } else if self.constant == 0.0 && nonzero.len() == 1 && w[nonzero[0]] == 1.0 {
            ObservableSpec::Coordinate(nonzero[0])
        } else if self.constant == 0.0 {
            ObservableSpec::LinearCombination(w)
        } else {
            return Err(Error::Input(
                "affine observables with both species and a constant are not supported".into(),
            ));
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, (name, c)) in self.terms.iter().enumerate() {
            let (neg, mag) = (*c < 0.0, c.abs());
            match (k, neg) {
                (0, true) => out.push('-'),
                (0, false) => {}
                (_, true) => out.push_str(" - "),
                (_, false) => out.push_str(" + "),
            }
            if mag != 1.0 {
                let _ = write!(out, "{mag} ");
            }
            out.push_str(name);
        }
        if self.terms.is_empty() {
            let _ = write!(out, "{}", self.constant);
        } else if self.constant != 0.0 {
            let sep = if self.constant < 0.0 { " - " } else { " + " };
            let _ = write!(out, "{sep}{}", self.constant.abs());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
}

fn tokenize(text: &str) -> Option<Vec<Token>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        match c {
            b' ' | b'\t' => i += 1,
            b'+' => {
                out.push(Token::Plus);
                i += 1;
            }
            b'-' => {
                out.push(Token::Minus);
                i += 1;
            }
            b'*' => {
                out.push(Token::Star);
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                    i += 1;
                }
                if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                    let mut j = i + 1;
                    if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                        j += 1;
                    }
                    if j < b.len() && b[j].is_ascii_digit() {
                        i = j;
                        while i < b.len() && b[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                out.push(Token::Num(text[start..i].parse().ok()?));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                out.push(Token::Ident(text[start..i].to_owned()));
            }
            _ => return None,
        }
    }
    Some(out)
}

fn push_term(terms: &mut Vec<(String, f64)>, name: &str, c: f64) {
    match terms.iter_mut().find(|(n, _)| n == name) {
        Some((_, v)) => *v += c,
        None => terms.push((name.to_owned(), c)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Path of the network file, relative to the configuration file.
    pub network: Option<String>,
    pub algorithm: Algorithm,
    pub replicas: usize,
    pub thresholds: Option<Thresholds>,
    pub dephasing: DephasingKind,
    pub initial_state: Vec<i64>,
    pub observables: Vec<(String, ObservableExpr)>,
    /// Names of observables that label metastable sets.
    pub slow_observables: Option<Vec<String>>,
    pub horizon: Horizon,
    pub master_seed: u64,
    pub output: Option<String>,
    pub workers: Option<usize>,
}

/// Parses `key = value` configuration text.
///
/// Keys: `network`, `algorithm` (`ssa`, `ctmc-parrep`, `embedded-parrep`),
/// `replicas`, `t_c`, `t_p`, `n_c`, `n_p`, `dephasing` (`rejection`,
/// `fleming-viot`), `initial_state` (whitespace-separated counts),
/// `observable <name> = <expr>`, `slow_observables` (names), `t_end` or
/// `n_end`, `master_seed`, `output`, `workers`.
pub fn parse_experiment(text: &str) -> Result<ExperimentConfig> {
    let mut kv: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    let mut observables: Vec<(String, ObservableExpr)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| Error::parse(line, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        if let Some(name) = key.strip_prefix("observable") {
            let name = name.trim();
            if !is_identifier(name) || name == "1" {
                return Err(Error::parse(line, format!("invalid observable name `{name}`")));
            }
            if observables.iter().any(|(n, _)| n == name) {
                return Err(Error::parse(line, format!("observable `{name}` defined twice")));
            }
            observables.push((name.to_owned(), ObservableExpr::parse(value, line)?));
            continue;
        }
        const KEYS: [&str; 14] = [
            "network",
            "algorithm",
            "replicas",
            "t_c",
            "t_p",
            "n_c",
            "n_p",
            "dephasing",
            "initial_state",
            "slow_observables",
            "t_end",
            "n_end",
            "master_seed",
            "output",
        ];
        if !KEYS.contains(&key) && key != "workers" {
            return Err(Error::parse(line, format!("unknown key `{key}`")));
        }
        if kv.insert(key, (line, value)).is_some() {
            return Err(Error::parse(line, format!("key `{key}` given twice")));
        }
    }

    fn num<T: std::str::FromStr>(kv: &BTreeMap<&str, (usize, &str)>, key: &str) -> Result<Option<T>> {
        match kv.get(key) {
            None => Ok(None),
            Some(&(line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("invalid value `{v}` for `{key}`"))),
        }
    }
    fn positive_f64(kv: &BTreeMap<&str, (usize, &str)>, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = num(kv, key)?;
        if let Some(x) = v {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::parse(kv[key].0, format!("`{key}` must be positive")));
            }
        }
        Ok(v)
    }
    fn positive_u64(kv: &BTreeMap<&str, (usize, &str)>, key: &str) -> Result<Option<u64>> {
        let v: Option<u64> = num(kv, key)?;
        if v == Some(0) {
            return Err(Error::parse(kv[key].0, format!("`{key}` must be positive")));
        }
        Ok(v)
    }

    let algorithm = match kv.get("algorithm") {
        Some(&(line, v)) => Algorithm::parse(v, line)?,
        None => Algorithm::EmbeddedParRep,
    };
    let replicas = positive_u64(&kv, "replicas")?.unwrap_or(1) as usize;
    let dephasing = match kv.get("dephasing") {
        Some(&(line, v)) => DephasingKind::parse(v, line)?,
        None => DephasingKind::Rejection,
    };
    let time_thr = (positive_f64(&kv, "t_c")?, positive_f64(&kv, "t_p")?);
    let step_thr = (positive_u64(&kv, "n_c")?, positive_u64(&kv, "n_p")?);
    let thresholds = match (time_thr, step_thr) {
        ((Some(t_c), Some(t_p)), (None, None)) => Some(Thresholds::Time { t_c, t_p }),
        ((None, None), (Some(n_c), Some(n_p))) => Some(Thresholds::Steps { n_c, n_p }),
        ((None, None), (None, None)) => None,
        ((Some(_), None), _) => return Err(Error::MissingField("t_p")),
        ((None, Some(_)), _) => return Err(Error::MissingField("t_c")),
        (_, (Some(_), None)) => return Err(Error::MissingField("n_p")),
        (_, (None, Some(_))) => return Err(Error::MissingField("n_c")),
        _ => {
            return Err(Error::Input(
                "give either time thresholds (t_c, t_p) or step thresholds (n_c, n_p), not both"
                    .into(),
            ))
        }
    };
    match (algorithm, thresholds) {
        (Algorithm::CtmcParRep, None) => return Err(Error::MissingField("t_c")),
        (Algorithm::EmbeddedParRep, None) => return Err(Error::MissingField("n_c")),
        (Algorithm::CtmcParRep, Some(Thresholds::Steps { .. })) => {
            return Err(Error::Input("ctmc-parrep takes time thresholds t_c and t_p".into()))
        }
        (Algorithm::EmbeddedParRep, Some(Thresholds::Time { .. })) => {
            return Err(Error::Input(
                "embedded-parrep takes step thresholds n_c and n_p".into(),
            ))
        }
        _ => {}
    }
    let initial_state = match kv.get("initial_state") {
        None => return Err(Error::MissingField("initial_state")),
        Some(&(line, v)) => {
            let counts: std::result::Result<Vec<i64>, _> =
                v.split_whitespace().map(str::parse::<i64>).collect();
            let counts = counts
                .map_err(|_| Error::parse(line, format!("invalid initial_state `{v}`")))?;
            if counts.is_empty() || counts.iter().any(|&c| c < 0) {
                return Err(Error::parse(line, "initial_state must be non-negative counts"));
            }
            counts
        }
    };
    let horizon = match (positive_f64(&kv, "t_end")?, positive_u64(&kv, "n_end")?) {
        (Some(t), None) => Horizon::Time(t),
        (None, Some(n)) => Horizon::Steps(n),
        (None, None) => return Err(Error::MissingField("horizon (t_end or n_end)")),
        (Some(_), Some(_)) => {
            return Err(Error::Input("give only one of t_end and n_end".into()));
        }
    };
    if matches!(horizon, Horizon::Steps(_)) && algorithm != Algorithm::EmbeddedParRep {
        return Err(Error::Input(format!(
            "n_end is only meaningful for embedded-parrep, not {}",
            algorithm.name()
        )));
    }
    let slow_observables = match kv.get("slow_observables") {
        None => None,
        Some(&(line, v)) => {
            let names: Vec<String> = v.split_whitespace().map(str::to_owned).collect();
            for n in &names {
                if !observables.iter().any(|(o, _)| o == n) {
                    return Err(Error::parse(line, format!("unknown observable `{n}`")));
                }
            }
            Some(names)
        }
    };
    let workers = positive_u64(&kv, "workers")?.map(|w| w as usize);
    Ok(ExperimentConfig {
        network: kv.get("network").map(|&(_, v)| v.to_owned()),
        algorithm,
        replicas,
        thresholds,
        dephasing,
        initial_state,
        observables,
        slow_observables,
        horizon,
        master_seed: num(&kv, "master_seed")?.unwrap_or(0),
        output: kv.get("output").map(|&(_, v)| v.to_owned()),
        workers,
    })
}

pub fn experiment_to_text(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    if let Some(n) = &cfg.network {
        let _ = writeln!(out, "network = {n}");
    }
    let _ = writeln!(out, "algorithm = {}", cfg.algorithm.name());
    let _ = writeln!(out, "replicas = {}", cfg.replicas);
    match cfg.thresholds {
        Some(Thresholds::Time { t_c, t_p }) => {
            let _ = writeln!(out, "t_c = {t_c}\nt_p = {t_p}");
        }
        Some(Thresholds::Steps { n_c, n_p }) => {
            let _ = writeln!(out, "n_c = {n_c}\nn_p = {n_p}");
        }
        None => {}
    }
    let _ = writeln!(out, "dephasing = {}", cfg.dephasing.name());
    let counts: Vec<String> = cfg.initial_state.iter().map(i64::to_string).collect();
    let _ = writeln!(out, "initial_state = {}", counts.join(" "));
    for (name, expr) in &cfg.observables {
        let _ = writeln!(out, "observable {name} = {}", expr.to_text());
    }
    if let Some(slow) = &cfg.slow_observables {
        let _ = writeln!(out, "slow_observables = {}", slow.join(" "));
    }
    match cfg.horizon {
        Horizon::Time(t) => {
            let _ = writeln!(out, "t_end = {t}");
        }
        Horizon::Steps(n) => {
            let _ = writeln!(out, "n_end = {n}");
        }
    }
    let _ = writeln!(out, "master_seed = {}", cfg.master_seed);
    if let Some(o) = &cfg.output {
        let _ = writeln!(out, "output = {o}");
    }
    if let Some(w) = cfg.workers {
        let _ = writeln!(out, "workers = {w}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::PopulationState;

    const CASCADE: &str = "\
# birth, conversion, death
species A B C
0 -> A @ 0.1
A -> B @ 100 fast
B -> A @ 100 fast
B -> C @ 0.01
C -> 0 @ 0.01 slow
";

    #[test]
    fn cascade_text_matches_fixture() {
        let net = parse_network(CASCADE).unwrap();
        assert_eq!(net, fixtures::birth_conversion_death());
        let x = PopulationState::new(vec![5, 10, 10]).unwrap();
        assert_eq!(
            net.propensities(&x).unwrap(),
            vec![0.1, 500.0, 1000.0, 0.1, 0.1]
        );
    }

    #[test]
    fn constant_reaction() {
        let net = parse_network("species A B C\n0 -> A @ 0.1\n").unwrap();
        assert_eq!(net.reactions()[0].propensity, Propensity::Constant(0.1));
        assert_eq!(net.reactions()[0].state_change, vec![1, 0, 0]);
    }

    #[test]
    fn trimer_reaction() {
        let net = parse_network("species S1 S2 S3 S4\n2 S2 + S3 -> 3 S4 @ 2 fast\n").unwrap();
        let r = &net.reactions()[0];
        assert_eq!(
            r.propensity,
            Propensity::MassAction {
                rate: 2.0,
                reactants: vec![(1, 2), (2, 1)]
            }
        );
        assert_eq!(r.state_change, vec![0, -2, -1, 3]);
        assert!(!net.is_slow(0));
        let compact = parse_network("species S1 S2 S3 S4\n2S2+S3 -> 3S4 @ 2 fast\n").unwrap();
        assert_eq!(compact, net);
    }

    #[test]
    fn self_loop_is_accepted() {
        let net = parse_network("species A\nA -> A @ 1\n").unwrap();
        assert_eq!(net.reactions()[0].state_change, vec![0]);
    }

    #[test]
    fn repeated_species_merge() {
        let net = parse_network("species A B\nA + A -> B @ 1\n").unwrap();
        assert_eq!(
            net.reactions()[0].propensity,
            Propensity::MassAction {
                rate: 1.0,
                reactants: vec![(0, 2)]
            }
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("species A\n\nA -> B @ 1\n", 3),
            ("species A\nA -> 0 @ 0\n", 2),
            ("species A\nA -> 0 @ -1\n", 2),
            ("species A\nA => 0 @ 1\n", 2),
            ("species A\nA -> 0\n", 2),
            ("species A\n12 A -> 0 @ 1\n", 2),
            ("species A\nA -> 0 @ 1 medium\n", 2),
            ("A -> 0 @ 1\n", 1),
        ];
        for (text, line) in cases {
            match parse_network(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn network_round_trip() {
        for net in [fixtures::birth_conversion_death(), fixtures::trimerization()] {
            let text = network_to_text(&net).unwrap();
            assert_eq!(parse_network(&text).unwrap(), net);
        }
    }

    const CTMC_CFG: &str = "\
network = cascade.net
algorithm = ctmc-parrep
replicas = 10
t_c = 0.01
t_p = 0.01
initial_state = 5 10 10
observable f1 = A + B
observable f2 = C
t_end = 1e4
master_seed = 7
";

    #[test]
    fn ctmc_config() {
        let cfg = parse_experiment(CTMC_CFG).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::CtmcParRep);
        assert_eq!(cfg.replicas, 10);
        assert_eq!(cfg.thresholds, Some(Thresholds::Time { t_c: 0.01, t_p: 0.01 }));
        assert_eq!(cfg.dephasing, DephasingKind::Rejection);
        assert_eq!(cfg.horizon, Horizon::Time(1e4));
        let species: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            cfg.observables[0].1.resolve(&species).unwrap(),
            ObservableSpec::LinearCombination(vec![1.0, 1.0, 0.0])
        );
        assert_eq!(
            cfg.observables[1].1.resolve(&species).unwrap(),
            ObservableSpec::Coordinate(2)
        );
    }

    #[test]
    fn fleming_viot_config() {
        let text = "algorithm = embedded-parrep\nreplicas = 100\nn_c = 60\nn_p = 60\n\
                    dephasing = fleming-viot\ninitial_state = 3 30 30 30\nt_end = 1000\n";
        let cfg = parse_experiment(text).unwrap();
        assert_eq!(cfg.thresholds, Some(Thresholds::Steps { n_c: 60, n_p: 60 }));
        assert_eq!(cfg.dephasing, DephasingKind::FlemingViot);
        assert!(cfg.observables.is_empty());
    }

    #[test]
    fn defaults_and_required_fields() {
        let cfg = parse_experiment("algorithm = ssa\ninitial_state = 1\nt_end = 5\n").unwrap();
        assert_eq!(cfg.replicas, 1);
        assert_eq!(cfg.dephasing, DephasingKind::Rejection);
        assert_eq!(
            parse_experiment("algorithm = ssa\nt_end = 5\n"),
            Err(Error::MissingField("initial_state"))
        );
        assert!(matches!(
            parse_experiment("algorithm = ssa\ninitial_state = 1\n"),
            Err(Error::MissingField(_))
        ));
        assert!(parse_experiment("algorithm = ctmc-parrep\ninitial_state = 1\nt_end = 5\nn_c = 3\nn_p = 3\n").is_err());
        assert!(parse_experiment("replicas = 0\ninitial_state = 1\nt_end = 5\nn_c=1\nn_p=1\n").is_err());
        assert!(parse_experiment("bogus = 1\n").is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = parse_experiment(CTMC_CFG).unwrap();
        let text = experiment_to_text(&cfg);
        assert_eq!(parse_experiment(&text).unwrap(), cfg);
    }

    #[test]
    fn expressions() {
        let e = ObservableExpr::parse("2*A - B + 3", 1).unwrap();
        assert_eq!(e.terms, vec![("A".to_string(), 2.0), ("B".to_string(), -1.0)]);
        assert_eq!(e.constant, 3.0);
        assert_eq!(ObservableExpr::parse(&e.to_text(), 1).unwrap(), e);
        let e = ObservableExpr::parse("-A + 1e-3 B", 1).unwrap();
        assert_eq!(e.terms, vec![("A".to_string(), -1.0), ("B".to_string(), 1e-3)]);
        assert!(ObservableExpr::parse("A +", 1).is_err());
        assert!(ObservableExpr::parse("A ++ B", 1).is_err());
        let one = ObservableExpr::parse("1", 1).unwrap();
        assert_eq!(one.resolve(&["A".into()]).unwrap(), ObservableSpec::Constant(1.0));
    }
}
