//! `LCW1` weight files.
//!
//! Layout: magic `LCW1`, version as u16 LE, header length as u32 LE, a UTF-8
//! header of `key=value` lines, then every parameter tensor as f32 LE in
//! manifest order (weight, bias, then running mean and variance for
//! batch-norm layers).

use std::fs;
use std::path::Path;

use super::config::{ActivationOrder, ConditionerInput, ModelConfig};
use super::model::{build_model, ForecastModel};
use crate::error::{Error, Result};
use crate::nn::{LayerKind, LayerParams, Rng, Sequential, Tensor};
use crate::util::write_atomic;

pub const MAGIC: &[u8; 4] = b"LCW1";
pub const VERSION: u16 = 1;

fn fmt_shape(s: &[usize]) -> String {
    s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn param_layers(model: &ForecastModel) -> Vec<(&str, &LayerParams)> {
    let mut out: Vec<_> = model.net.param_layers().map(|(_, n, p)| (n, p)).collect();
    if let Some(h) = &model.head {
        out.extend(h.param_layers().map(|(_, n, p)| (n, p)));
    }
    out
}

fn tensors(p: &LayerParams) -> Vec<&Tensor> {
    let mut v = vec![&p.weight, &p.bias];
    v.extend(p.running_mean.iter());
    v.extend(p.running_var.iter());
    v
}

fn header(model: &ForecastModel) -> String {
    let c = &model.config;
    let mut h = String::new();
    let mut kv = |k: &str, v: String| {
        h.push_str(k);
        h.push('=');
        h.push_str(&v);
        h.push('\n');
    };
    kv("samples_per_day", c.samples_per_day.to_string());
    kv("weeks", c.weeks.to_string());
    kv("days_per_week", c.days_per_week.to_string());
    kv("conv_filters", c.conv_filters.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(","));
    kv("pools", c.pools.iter().map(|(a, b)| format!("{a}x{b}")).collect::<Vec<_>>().join(","));
    kv("dense_width", c.dense_width.to_string());
    kv("dropout_p", c.dropout_p.to_string());
    kv("activation_order", c.activation_order.as_str().into());
    kv("conditioned", c.conditioned.to_string());
    kv("conditioner_input", c.conditioner_input.as_str().into());
    kv("conditioner_hidden", c.conditioner_hidden.to_string());
    kv("lambda_dct", c.lambda_dct.to_string());
    kv("surrogate_weight", c.surrogate_weight.to_string());
    kv("normalization_reference", model.normalization_reference.map_or("none".into(), |r| r.to_string()));
    let layers = param_layers(model);
    kv("layers", layers.len().to_string());
    for (i, (name, p)) in layers.iter().enumerate() {
        let shapes: Vec<String> = tensors(p).iter().map(|t| fmt_shape(t.shape())).collect();
        kv(&format!("layer.{i}"), format!("{name};{};{};frozen={}", p.kind.as_str(), shapes.join(","), p.frozen as u8));
    }
    h
}

/// Serialises the model to bytes. Parameters are rounded to f32.
pub fn write_weights(model: &ForecastModel) -> Vec<u8> {
    let h = header(model);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(h.len() as u32).to_le_bytes());
    out.extend_from_slice(h.as_bytes());
    for (_, p) in param_layers(model) {
        for t in tensors(p) {
            for v in t.data() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn save_weights(model: &ForecastModel, path: &Path) -> Result<()> {
    write_atomic(path, &write_weights(model))
}

pub fn load_weights(path: &Path) -> Result<ForecastModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_weights(&bytes)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn field<'a>(map: &'a [(String, String)], key: &str) -> Result<&'a str> {
    map.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).ok_or_else(|| bad(format!("header lacks `{key}`")))
}

fn num<T: std::str::FromStr>(map: &[(String, String)], key: &str) -> Result<T> {
    let v = field(map, key)?;
    v.parse().map_err(|_| bad(format!("bad value for `{key}`: {v:?}")))
}

fn parse_config(map: &[(String, String)]) -> Result<ModelConfig> {
    let conv_filters = field(map, "conv_filters")?
        .split(',')
        .map(|f| f.parse().map_err(|_| bad(format!("bad conv filter {f:?}"))))
        .collect::<Result<Vec<usize>>>()?;
    let pools = field(map, "pools")?
        .split(',')
        .map(|p| {
            let (a, b) = p.split_once('x').ok_or_else(|| bad(format!("bad pool {p:?}")))?;
            Ok((a.parse().map_err(|_| bad(format!("bad pool {p:?}")))?, b.parse().map_err(|_| bad(format!("bad pool {p:?}")))?))
        })
        .collect::<Result<Vec<(usize, usize)>>>()?;
    let order = field(map, "activation_order")?;
    let cin = field(map, "conditioner_input")?;
    Ok(ModelConfig {
        samples_per_day: num(map, "samples_per_day")?,
        weeks: num(map, "weeks")?,
        days_per_week: num(map, "days_per_week")?,
        conv_filters,
        pools,
        dense_width: num(map, "dense_width")?,
        dropout_p: num(map, "dropout_p")?,
        activation_order: ActivationOrder::parse(order).ok_or_else(|| bad(format!("unknown activation order {order:?}")))?,
        conditioned: num(map, "conditioned")?,
        conditioner_input: ConditionerInput::parse(cin).ok_or_else(|| bad(format!("unknown conditioner input {cin:?}")))?,
        conditioner_hidden: num(map, "conditioner_hidden")?,
        lambda_dct: num(map, "lambda_dct")?,
        surrogate_weight: num(map, "surrogate_weight")?,
    })
}

/// Parses an `LCW1` image. Any inconsistency between the header, the
/// declared configuration and the payload is a format error.
pub fn read_weights(bytes: &[u8]) -> Result<ForecastModel> {
    if bytes.len() < 10 || &bytes[..4] != MAGIC {
        return Err(bad("not an LCW1 weight file (bad magic)"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(format!("unsupported weight file version {version}")));
    }
    let hlen = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let body = &bytes[10..];
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let text = std::str::from_utf8(&body[..hlen]).map_err(|_| bad("header is not UTF-8"))?;
    let map: Vec<(String, String)> = text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())).ok_or_else(|| bad(format!("bad header line {l:?}"))))
        .collect::<Result<_>>()?;

    let config = parse_config(&map)?;
    config.validate().map_err(|e| bad(format!("declared configuration is invalid: {e}")))?;
    let mut model = build_model(&config, &mut Rng::new(0))?;
    model.normalization_reference = match field(&map, "normalization_reference")? {
        "none" => None,
        v => {
            let r: f64 = v.parse().map_err(|_| bad(format!("bad normalization reference {v:?}")))?;
            if !(r > 0.0 && r.is_finite()) {
                return Err(bad(format!("normalization reference must be positive, got {r}")));
            }
            Some(r)
        }
    };

    let declared: usize = num(&map, "layers")?;
    let expected = param_layers(&model).len();
    if declared != expected {
        return Err(bad(format!("header declares {declared} parameter layers, configuration implies {expected}")));
    }
    let mut payload = &body[hlen..];
    let mut fill = |net: &mut Sequential, offset: usize| -> Result<usize> {
        let mut i = offset;
        for layer in &mut net.layers {
            let Some(name) = layer.name().map(str::to_string) else { continue };
            let p = layer.params_mut().expect("named layers carry parameters");
            let entry = field(&map, &format!("layer.{i}"))?;
            let parts: Vec<&str> = entry.split(';').collect();
            let [lname, kind, shapes, frozen] = parts[..] else {
                return Err(bad(format!("bad manifest entry {entry:?}")));
            };
            let want: Vec<String> = tensors(p).iter().map(|t| fmt_shape(t.shape())).collect();
            if lname != name || LayerKind::parse(kind) != Some(p.kind) || shapes != want.join(",") {
                return Err(bad(format!("layer {i}: manifest `{entry}` does not match configuration ({name}, {})", want.join(","))));
            }
            p.frozen = match frozen {
                "frozen=0" => false,
                "frozen=1" => true,
                _ => return Err(bad(format!("bad freeze flag in {entry:?}"))),
            };
            let mut slots = vec![&mut p.weight, &mut p.bias];
            slots.extend(p.running_mean.iter_mut());
            slots.extend(p.running_var.iter_mut());
            for t in slots {
                let need = t.len() * 4;
                if payload.len() < need {
                    return Err(bad(format!("payload truncated in layer {name}")));
                }
                for (v, chunk) in t.data_mut().iter_mut().zip(payload[..need].chunks_exact(4)) {
                    let x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                    if !x.is_finite() {
                        return Err(bad(format!("non-finite value in layer {name}")));
                    }
                    *v = x as f64;
                }
                payload = &payload[need..];
            }
            i += 1;
        }
        Ok(i)
    };
    let used = fill(&mut model.net, 0)?;
    if let Some(head) = model.head.as_mut() {
        fill(head, used)?;
    }
    if !payload.is_empty() {
        return Err(bad(format!("{} trailing bytes after the last tensor", payload.len())));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(conditioned: bool) -> ForecastModel {
        let cfg = ModelConfig {
            conditioned,
            ..ModelConfig::compact(8, vec![4, 6, 4, 4, 4], vec![(2, 1), (2, 1), (2, 1), (1, 2), (1, 2)], 12)
        };
        let mut m = build_model(&cfg, &mut Rng::new(7)).unwrap();
        m.normalization_reference = Some(123.456);
        m.freeze_feature_extractor();
        if let Some(p) = m.net.layers[2].params_mut() {
            p.running_mean.as_mut().unwrap().fill(0.3);
        }
        m
    }

    #[test]
    fn byte_identical_resave() {
        for cond in [false, true] {
            let m = model(cond);
            let a = write_weights(&m);
            let loaded = read_weights(&a).unwrap();
            let b = write_weights(&loaded);
            assert_eq!(a, b);
            assert_eq!(loaded.config, m.config);
            assert_eq!(loaded.normalization_reference, Some(123.456));
            assert_eq!(loaded.head.is_some(), cond);
            for (x, y) in m.net.layers.iter().zip(&loaded.net.layers) {
                if let (Some(p), Some(q)) = (x.params(), y.params()) {
                    assert_eq!(p.frozen, q.frozen);
                    for (u, v) in p.weight.data().iter().zip(q.weight.data()) {
                        assert!((u - v).abs() <= 1e-7 * u.abs().max(1e-30));
                    }
                }
            }
        }
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = write_weights(&model(true));
        for cut in (0..bytes.len()).step_by(97).chain([bytes.len() - 1]) {
            assert!(matches!(read_weights(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn bad_magic_version_and_shape() {
        let bytes = write_weights(&model(false));
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(read_weights(&b), Err(Error::Format(_))));
        let mut b = bytes.clone();
        b[4] = 2;
        assert!(matches!(read_weights(&b), Err(Error::Format(_))));
        let text = String::from_utf8_lossy(&bytes).replacen("dense_width=12", "dense_width=13", 1);
        assert!(matches!(read_weights(text.as_bytes()), Err(Error::Format(_))));
        let mut b = bytes.clone();
        b.push(0);
        assert!(matches!(read_weights(&b), Err(Error::Format(_))));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lcw");
        let m = model(false);
        save_weights(&m, &path).unwrap();
        let loaded = load_weights(&path).unwrap();
        assert_eq!(write_weights(&loaded), fs::read(&path).unwrap());
    }
}
