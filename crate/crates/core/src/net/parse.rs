//! Line-oriented network description format.
//!
//! ```text
//! # comment
//! classes 5
//! input cir channels=3
//! conv1 conv in=cir k=5x5 s=1 p=2 d=1 c=32
//! relu1 relu
//! pool1 pool k=3x3 s=2 p=1
//! prob softmax
//! ```
//!
//! A layer without `in=` reads from the layer on the previous line.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::layer::{LayerKind, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::kernels::ConvParams;

fn syntax(line: usize, detail: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        detail: detail.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| syntax(line, format!("`{key}` expects a number, got `{v}`")))
}

fn parse_kernel(line: usize, v: &str) -> Result<(usize, usize)> {
    match v.split_once('x') {
        Some((h, w)) => Ok((parse_num(line, "k", h)?, parse_num(line, "k", w)?)),
        None => {
            let k = parse_num(line, "k", v)?;
            Ok((k, k))
        }
    }
}

fn allowed_keys(kind: &str) -> &'static [&'static str] {
    match kind {
        "conv" => &["in", "k", "s", "p", "d", "c"],
        "pool" => &["in", "k", "s", "p", "d"],
        "dropout" => &["in", "ratio"],
        "upsample" => &["in", "f"],
        _ => &["in"],
    }
}

/// Parses and validates a network description.
pub fn parse_spec(text: &str) -> Result<NetworkSpec> {
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut classes = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let head = tokens.next().unwrap_or_default();
        match head {
            "classes" => {
                let v = tokens.next().ok_or_else(|| syntax(line_no, "`classes` needs a count"))?;
                classes = Some(parse_num::<usize>(line_no, "classes", v)?);
                if let Some(extra) = tokens.next() {
                    return Err(syntax(line_no, format!("unexpected `{extra}`")));
                }
                continue;
            }
            "input" => {
                let name = tokens.next().ok_or_else(|| syntax(line_no, "`input` needs a name"))?;
                let spec = tokens
                    .next()
                    .ok_or_else(|| syntax(line_no, "`input` needs channels=<C>"))?;
                let c = spec
                    .strip_prefix("channels=")
                    .ok_or_else(|| syntax(line_no, format!("expected channels=<C>, got `{spec}`")))?;
                if let Some(extra) = tokens.next() {
                    return Err(syntax(line_no, format!("unexpected `{extra}`")));
                }
                layers.push(LayerSpec::input(name, parse_num(line_no, "channels", c)?));
                continue;
            }
            _ => {}
        }
        let name = head;
        let kind = tokens
            .next()
            .ok_or_else(|| syntax(line_no, format!("layer `{name}` has no kind")))?;
        let allowed = allowed_keys(kind);
        let mut kv: HashMap<&str, &str> = HashMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| syntax(line_no, format!("expected key=value, got `{tok}`")))?;
            if !allowed.contains(&k) {
                return Err(syntax(line_no, format!("key `{k}` is not valid for {kind} layers")));
            }
            if kv.insert(k, v).is_some() {
                return Err(syntax(line_no, format!("key `{k}` given twice")));
            }
        }
        let inputs: Vec<String> = match kv.get("in") {
            Some(v) => v.split(',').map(str::to_string).collect(),
            None => match layers.last() {
                Some(prev) => vec![prev.name.clone()],
                None => return Err(syntax(line_no, format!("layer `{name}` has no predecessor"))),
            },
        };
        let geom = |kv: &HashMap<&str, &str>| -> Result<ConvParams> {
            let (kh, kw) = parse_kernel(
                line_no,
                kv.get("k")
                    .ok_or_else(|| syntax(line_no, format!("{kind} layer `{name}` needs k=")))?,
            )?;
            let get = |key: &str, default: usize| -> Result<usize> {
                kv.get(key).map_or(Ok(default), |v| parse_num(line_no, key, v))
            };
            Ok(ConvParams {
                kernel_h: kh,
                kernel_w: kw,
                stride: get("s", 1)?,
                pad: get("p", 0)?,
                dilation: get("d", 1)?,
            })
        };
        let kind = match kind {
            "conv" => LayerKind::Conv {
                geom: geom(&kv)?,
                out_channels: parse_num(
                    line_no,
                    "c",
                    kv.get("c")
                        .ok_or_else(|| syntax(line_no, format!("conv layer `{name}` needs c=")))?,
                )?,
            },
            "pool" => LayerKind::Pool { geom: geom(&kv)? },
            "relu" => LayerKind::Relu,
            "softmax" => LayerKind::Softmax,
            "concat" => LayerKind::Concat,
            "dropout" => LayerKind::Dropout {
                ratio: kv.get("ratio").map_or(Ok(0.5), |v| parse_num(line_no, "ratio", v))?,
            },
            "upsample" => LayerKind::Upsample {
                factor: parse_num(
                    line_no,
                    "f",
                    kv.get("f")
                        .ok_or_else(|| syntax(line_no, format!("upsample layer `{name}` needs f=")))?,
                )?,
            },
            "input" => return Err(syntax(line_no, "declare inputs with `input <name> channels=<C>`")),
            other => return Err(syntax(line_no, format!("unknown layer kind `{other}`"))),
        };
        layers.push(LayerSpec {
            name: name.to_string(),
            kind,
            inputs,
        });
    }
    NetworkSpec::new(layers, classes)
}

impl NetworkSpec {
    /// Canonical text form; [`parse_spec`] reads it back to an equal network.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(k) = self.classes() {
            let _ = writeln!(out, "classes {k}");
        }
        for layer in self.layers() {
            let inputs = layer.inputs.join(",");
            let geom = |g: &crate::kernels::ConvParams| {
                format!(
                    "k={}x{} s={} p={} d={}",
                    g.kernel_h, g.kernel_w, g.stride, g.pad, g.dilation
                )
            };
            let line = match &layer.kind {
                LayerKind::Input { channels } => format!("input {} channels={channels}", layer.name),
                LayerKind::Conv { geom: g, out_channels } => {
                    format!("{} conv in={inputs} {} c={out_channels}", layer.name, geom(g))
                }
                LayerKind::Pool { geom: g } => format!("{} pool in={inputs} {}", layer.name, geom(g)),
                LayerKind::Dropout { ratio } => format!("{} dropout in={inputs} ratio={ratio}", layer.name),
                LayerKind::Upsample { factor } => format!("{} upsample in={inputs} f={factor}", layer.name),
                other => format!("{} {} in={inputs}", layer.name, other.name()),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}
