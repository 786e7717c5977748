//! The `spnmodel v1` text format: one node per line in children-first order,
//! root declared last. Probabilities and weights are written in linear space
//! at 17 significant digits, so parsing recovers the exact doubles.
//!
//! ```text
//! spnmodel v1 vars=<n>
//! leaf <id> cat <var> <p0> <p1> ...
//! leaf <id> gauss <var> <mean> <variance>
//! prod <id> <child_id> ...
//! sum <id> (<child_id>:<weight>) ...
//! root <id>
//! ```
//!
//! `#` begins a comment line. Column kinds are reconstructed from the
//! leaves; decoded structures must pass validation.

use super::{LeafDistribution, NodeId, Spn, SpnNode, ValidationReport, VarId};
use crate::data::ColumnMeta;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("decoded model failed validation:\n{0}")]
    Invalid(ValidationReport),
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

impl Spn {
    /// Serializes the network, renumbering nodes into topological order.
    pub fn to_text(&self) -> String {
        let order = self.evaluation_order();
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        for (i, &id) in order.iter().enumerate() {
            new_id[id.0] = i;
        }
        let mut out = format!("spnmodel v1 vars={}\n", self.schema.len());
        for &id in order {
            match &self.nodes[id.0] {
                SpnNode::Leaf { var, dist } => match dist {
                    LeafDistribution::Categorical { log_probs } => {
                        write!(out, "leaf {} cat {}", new_id[id.0], var.0).unwrap();
                        for lp in log_probs {
                            write!(out, " {}", fmt17(lp.exp())).unwrap();
                        }
                        out.push('\n');
                    }
                    LeafDistribution::Gaussian { mean, variance } => {
                        writeln!(
                            out,
                            "leaf {} gauss {} {} {}",
                            new_id[id.0],
                            var.0,
                            fmt17(*mean),
                            fmt17(*variance)
                        )
                        .unwrap();
                    }
                },
                SpnNode::Product { children } => {
                    write!(out, "prod {}", new_id[id.0]).unwrap();
                    for c in children {
                        write!(out, " {}", new_id[c.0]).unwrap();
                    }
                    out.push('\n');
                }
                SpnNode::Sum {
                    children,
                    log_weights,
                } => {
                    write!(out, "sum {}", new_id[id.0]).unwrap();
                    for (c, w) in children.iter().zip(log_weights) {
                        write!(out, " ({}:{})", new_id[c.0], fmt17(w.exp())).unwrap();
                    }
                    out.push('\n');
                }
            }
        }
        writeln!(out, "root {}", new_id[self.root.0]).unwrap();
        out
    }

    /// Parses the text format and validates the decoded structure.
    pub fn from_text(text: &str) -> Result<Spn, ModelError> {
        let parse_err = |line: usize, msg: String| ModelError::Parse { line, msg };

        let mut n_vars: Option<usize> = None;
        let mut nodes: Vec<SpnNode> = Vec::new();
        let mut ids: HashMap<u64, NodeId> = HashMap::new();
        let mut kinds: Vec<Option<ColumnMeta>> = Vec::new();
        let mut root: Option<NodeId> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if root.is_some() {
                return Err(parse_err(lineno, "content after the root line".into()));
            }

            let mut tokens = line.split_whitespace();
            let head = tokens.next().unwrap();

            if n_vars.is_none() {
                if head != "spnmodel" {
                    return Err(parse_err(lineno, "expected header `spnmodel v1 vars=<n>`".into()));
                }
                if tokens.next() != Some("v1") {
                    return Err(parse_err(lineno, "unsupported model version".into()));
                }
                let vars_tok = tokens
                    .next()
                    .and_then(|t| t.strip_prefix("vars="))
                    .ok_or_else(|| parse_err(lineno, "missing vars=<n> in header".into()))?;
                let n: usize = vars_tok
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad variable count {vars_tok:?}")))?;
                n_vars = Some(n);
                kinds = vec![None; n];
                continue;
            }
            let n_vars = n_vars.unwrap();

            let mut parse_f64 = |tok: &str| {
                tok.parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("bad number {tok:?}")))
            };
            let define = |raw_id: &str,
                              node: SpnNode,
                              nodes: &mut Vec<SpnNode>,
                              ids: &mut HashMap<u64, NodeId>|
             -> Result<(), ModelError> {
                let id: u64 = raw_id
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad node id {raw_id:?}")))?;
                if ids.contains_key(&id) {
                    return Err(parse_err(lineno, format!("duplicate node id {id}")));
                }
                ids.insert(id, NodeId(nodes.len()));
                nodes.push(node);
                Ok(())
            };
            let lookup = |raw: &str, ids: &HashMap<u64, NodeId>| -> Result<NodeId, ModelError> {
                let id: u64 = raw
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad node id {raw:?}")))?;
                ids.get(&id).copied().ok_or_else(|| {
                    parse_err(lineno, format!("child {id} is not defined yet"))
                })
            };

            match head {
                "leaf" => {
                    let raw_id = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, "missing leaf id".into()))?;
                    let kind = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, "missing leaf kind".into()))?;
                    let var_tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, "missing leaf variable".into()))?;
                    let var: usize = var_tok
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad variable {var_tok:?}")))?;
                    if var >= n_vars {
                        return Err(parse_err(
                            lineno,
                            format!("variable {var} out of range (vars={n_vars})"),
                        ));
                    }
                    let dist = match kind {
                        "cat" => {
                            let probs: Vec<f64> = tokens
                                .map(&mut parse_f64)
                                .collect::<Result<_, _>>()?;
                            if probs.is_empty() {
                                return Err(parse_err(lineno, "categorical leaf without probabilities".into()));
                            }
                            if kinds[var].is_none() {
                                kinds[var] =
                                    Some(ColumnMeta::discrete(format!("v{var}"), probs.len() as u32));
                            }
                            LeafDistribution::Categorical {
                                log_probs: probs.iter().map(|p| p.ln()).collect(),
                            }
                        }
                        "gauss" => {
                            let mean = parse_f64(
                                tokens
                                    .next()
                                    .ok_or_else(|| parse_err(lineno, "missing mean".into()))?,
                            )?;
                            let variance = parse_f64(
                                tokens
                                    .next()
                                    .ok_or_else(|| parse_err(lineno, "missing variance".into()))?,
                            )?;
                            if tokens.next().is_some() {
                                return Err(parse_err(lineno, "trailing tokens on gauss leaf".into()));
                            }
                            if kinds[var].is_none() {
                                kinds[var] = Some(ColumnMeta::continuous(format!("v{var}")));
                            }
                            LeafDistribution::Gaussian { mean, variance }
                        }
                        other => {
                            return Err(parse_err(lineno, format!("unknown leaf kind {other:?}")))
                        }
                    };
                    define(
                        raw_id,
                        SpnNode::Leaf {
                            var: VarId(var),
                            dist,
                        },
                        &mut nodes,
                        &mut ids,
                    )?;
                }
                "prod" => {
                    let raw_id = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, "missing product id".into()))?;
                    let children: Vec<NodeId> = tokens
                        .map(|t| lookup(t, &ids))
                        .collect::<Result<_, _>>()?;
                    define(raw_id, SpnNode::Product { children }, &mut nodes, &mut ids)?;
                }
                "sum" => {
                    let raw_id = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, "missing sum id".into()))?;
                    let mut children = Vec::new();
                    let mut log_weights = Vec::new();
                    for t in tokens {
                        let inner = t
                            .strip_prefix('(')
                            .and_then(|t| t.strip_suffix(')'))
                            .ok_or_else(|| {
                                parse_err(lineno, format!("expected (child:weight), got {t:?}"))
                            })?;
                        let (c, w) = inner.split_once(':').ok_or_else(|| {
                            parse_err(lineno, format!("expected (child:weight), got {t:?}"))
                        })?;
                        children.push(lookup(c, &ids)?);
                        log_weights.push(parse_f64(w)?.ln());
                    }
                    define(
                        raw_id,
                        SpnNode::Sum {
                            children,
                            log_weights,
                        },
                        &mut nodes,
                        &mut ids,
                    )?;
                }
                "root" => {
                    let raw = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, "missing root id".into()))?;
                    root = Some(lookup(raw, &ids)?);
                }
                other => return Err(parse_err(lineno, format!("unknown directive {other:?}"))),
            }
        }

        let n_vars = n_vars.ok_or_else(|| parse_err(1, "missing `spnmodel` header".into()))?;
        let root = root.ok_or_else(|| {
            parse_err(text.lines().count().max(1), "missing root line".into())
        })?;
        let schema: Vec<ColumnMeta> = kinds
            .into_iter()
            .enumerate()
            .map(|(i, k)| k.unwrap_or_else(|| ColumnMeta::discrete(format!("v{i}"), 2)))
            .collect();
        debug_assert_eq!(schema.len(), n_vars);

        let spn = Spn::from_parts(nodes, root, schema);
        let report = spn.validate();
        if !report.is_valid() {
            return Err(ModelError::Invalid(report));
        }
        Ok(spn)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Spn, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Spn::from_text(&text)
    }
}
