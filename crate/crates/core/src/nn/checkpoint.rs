//! Text checkpoint format.
//!
//! ```text
//! voltguard-checkpoint 1
//! meta algorithm sacl
//! scalar log_alpha 3fb999999999999a
//! net policy 80 64 64 48
//! p <hex> <hex> ...          (six lines: w0 b0 w1 b1 w2 b2, row-major)
//! adam policy 80 64 64 48 <step> <lr> <beta1> <beta2> <eps>
//! p ...                      (six first-moment lines, then six second-moment lines)
//! end
//! ```
//!
//! Every float is written as the 16 hex digits of its IEEE-754 bit pattern,
//! so decoding reproduces the exact values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use super::{AdamConfig, AdamState, Mlp, NnError, Tensors};

pub const CHECKPOINT_MAGIC: &str = "voltguard-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub scalars: BTreeMap<String, f64>,
    pub nets: BTreeMap<String, Mlp>,
    pub optimizers: BTreeMap<String, AdamState>,
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn write_tensors(out: &mut String, t: &Tensors) {
    for s in t.slices() {
        out.push('p');
        for v in s {
            out.push(' ');
            out.push_str(&hex(*v));
        }
        out.push('\n');
    }
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl Checkpoint {
    pub fn encode(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC} {VERSION}");
        for (k, v) in &self.meta {
            debug_assert!(valid_token(k) && !v.contains('\n'));
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (k, v) in &self.scalars {
            let _ = writeln!(out, "scalar {k} {}", hex(*v));
        }
        for (k, net) in &self.nets {
            let d = net.dims();
            let _ = writeln!(out, "net {k} {} {} {} {}", d[0], d[1], d[2], d[3]);
            write_tensors(&mut out, &net.params);
        }
        for (k, opt) in &self.optimizers {
            let d = dims_of(&opt.m);
            let c = opt.cfg;
            let _ = writeln!(
                out,
                "adam {k} {} {} {} {} {} {} {} {} {}",
                d[0], d[1], d[2], d[3], opt.step,
                hex(c.lr), hex(c.beta1), hex(c.beta2), hex(c.eps)
            );
            write_tensors(&mut out, &opt.m);
            write_tensors(&mut out, &opt.v);
        }
        out.push_str("end\n");
        out
    }

    pub fn decode(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, msg: &str| NnError::Checkpoint { line, msg: msg.to_string() };

        let (n, header) = lines.next().ok_or_else(|| err(1, "empty checkpoint"))?;
        let mut h = header.split(' ');
        if h.next() != Some(CHECKPOINT_MAGIC) {
            return Err(err(n, "missing checkpoint header"));
        }
        match h.next().and_then(|v| v.parse::<u32>().ok()) {
            Some(VERSION) if h.next().is_none() => {}
            _ => return Err(err(n, "unsupported checkpoint version")),
        }

        let mut ck = Checkpoint::default();
        loop {
            let (n, line) = lines.next().ok_or_else(|| err(0, "truncated checkpoint (no 'end')"))?;
            let (kind, rest) = line.split_once(' ').unwrap_or((line, ""));
            match kind {
                "end" => {
                    if !rest.is_empty() {
                        return Err(err(n, "trailing data after 'end'"));
                    }
                    break;
                }
                "meta" => {
                    let (k, v) = rest.split_once(' ').ok_or_else(|| err(n, "meta needs a key and a value"))?;
                    if !valid_token(k) {
                        return Err(err(n, "invalid meta key"));
                    }
                    if ck.meta.insert(k.to_string(), v.to_string()).is_some() {
                        return Err(err(n, "duplicate meta key"));
                    }
                }
                "scalar" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 2 || !valid_token(f[0]) {
                        return Err(err(n, "scalar needs a name and a value"));
                    }
                    let v = parse_hex(f[1]).ok_or_else(|| err(n, "invalid scalar value"))?;
                    if ck.scalars.insert(f[0].to_string(), v).is_some() {
                        return Err(err(n, "duplicate scalar"));
                    }
                }
                "net" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 5 || !valid_token(f[0]) {
                        return Err(err(n, "net needs a name and four dims"));
                    }
                    let dims = parse_dims(&f[1..5]).ok_or_else(|| err(n, "invalid dims"))?;
                    let params = read_tensors(&mut lines, dims, n)?;
                    let net = Mlp::from_params(dims, params).map_err(|e| err(n, &e.to_string()))?;
                    if ck.nets.insert(f[0].to_string(), net).is_some() {
                        return Err(err(n, "duplicate net"));
                    }
                }
                "adam" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 10 || !valid_token(f[0]) {
                        return Err(err(n, "adam needs a name, four dims, step and four hyperparameters"));
                    }
                    let dims = parse_dims(&f[1..5]).ok_or_else(|| err(n, "invalid dims"))?;
                    let step: u64 = f[5].parse().map_err(|_| err(n, "invalid step"))?;
                    let hp: Vec<f64> = f[6..10]
                        .iter()
                        .map(|s| parse_hex(s))
                        .collect::<Option<_>>()
                        .ok_or_else(|| err(n, "invalid hyperparameter"))?;
                    let m = read_tensors(&mut lines, dims, n)?;
                    let v = read_tensors(&mut lines, dims, n)?;
                    let cfg = AdamConfig { lr: hp[0], beta1: hp[1], beta2: hp[2], eps: hp[3] };
                    if ck.optimizers.insert(f[0].to_string(), AdamState { cfg, m, v, step }).is_some() {
                        return Err(err(n, "duplicate optimizer"));
                    }
                }
                _ => return Err(err(n, "unknown record")),
            }
        }
        if let Some((n, l)) = lines.next() {
            if !l.is_empty() || lines.next().is_some() {
                return Err(err(n, "data after 'end'"));
            }
        }
        Ok(ck)
    }

    pub fn net(&self, name: &str) -> Result<&Mlp, NnError> {
        self.nets.get(name).ok_or_else(|| NnError::Checkpoint {
            line: 0,
            msg: format!("missing net '{name}'"),
        })
    }

    pub fn optimizer(&self, name: &str) -> Result<&AdamState, NnError> {
        self.optimizers.get(name).ok_or_else(|| NnError::Checkpoint {
            line: 0,
            msg: format!("missing optimizer '{name}'"),
        })
    }

    pub fn scalar(&self, name: &str) -> Result<f64, NnError> {
        self.scalars.get(name).copied().ok_or_else(|| NnError::Checkpoint {
            line: 0,
            msg: format!("missing scalar '{name}'"),
        })
    }
}

fn dims_of(t: &Tensors) -> [usize; 4] {
    [t.w[0].nrows(), t.w[0].ncols(), t.w[1].ncols(), t.w[2].ncols()]
}

fn parse_hex(s: &str) -> Option<f64> {
    if s.len() != 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok().map(f64::from_bits)
}

fn parse_dims(f: &[&str]) -> Option<[usize; 4]> {
    let mut d = [0usize; 4];
    for (slot, s) in d.iter_mut().zip(f) {
        *slot = s.parse().ok().filter(|&v| v > 0)?;
    }
    Some(d)
}

fn read_tensors<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    dims: [usize; 4],
    header_line: usize,
) -> Result<Tensors, NnError> {
    let mut w = Vec::with_capacity(3);
    let mut b = Vec::with_capacity(3);
    for k in 0..3 {
        for is_bias in [false, true] {
            let expected = if is_bias {
                Some(dims[k + 1])
            } else {
                dims[k].checked_mul(dims[k + 1])
            };
            let (n, line) = lines.next().ok_or(NnError::Checkpoint {
                line: header_line,
                msg: "truncated tensor block".into(),
            })?;
            let err = |msg: &str| NnError::Checkpoint { line: n, msg: msg.to_string() };
            let body = line.strip_prefix('p').ok_or_else(|| err("expected parameter line"))?;
            let values: Vec<f64> = body
                .split(' ')
                .skip(1)
                .map(parse_hex)
                .collect::<Option<_>>()
                .ok_or_else(|| err("invalid parameter value"))?;
            if !body.is_empty() && !body.starts_with(' ') {
                return Err(err("expected parameter line"));
            }
            if Some(values.len()) != expected {
                return Err(err("parameter count does not match dims"));
            }
            if is_bias {
                b.push(Array1::from(values));
            } else {
                w.push(
                    Array2::from_shape_vec((dims[k], dims[k + 1]), values)
                        .map_err(|_| err("bad tensor shape"))?,
                );
            }
        }
    }
    Ok(Tensors { w, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new([3, 4, 5, 2], 1.0, &mut rng).unwrap();
        let mut opt = AdamState::new(&net, AdamConfig::default());
        let mut n2 = net.clone();
        opt.step(&mut n2, &net.params).unwrap();
        let mut ck = Checkpoint::default();
        ck.meta.insert("algorithm".into(), "sacl".into());
        ck.meta.insert("note".into(), "two words".into());
        ck.scalars.insert("lambda".into(), 0.1 + 0.2);
        ck.scalars.insert("neg_zero".into(), -0.0);
        ck.nets.insert("policy".into(), n2);
        ck.optimizers.insert("policy".into(), opt);
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let text = ck.encode();
        let back = Checkpoint::decode(&text).unwrap();
        assert_eq!(back.encode(), text);
        assert_eq!(back.scalars["lambda"].to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back.scalars["neg_zero"].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_corruption() {
        let text = sample().encode();
        assert!(Checkpoint::decode("").is_err());
        assert!(Checkpoint::decode("voltguard-checkpoint 2\nend\n").is_err());
        assert!(Checkpoint::decode(&text.replace("end\n", "")).is_err());
        assert!(Checkpoint::decode(&text.replace("net policy 3", "net policy 4")).is_err());
        assert!(Checkpoint::decode(&format!("{text}junk\n")).is_err());
        assert!(Checkpoint::decode("voltguard-checkpoint 1\nnet a 0 1 1 1\nend\n").is_err());
        assert!(Checkpoint::decode("voltguard-checkpoint 1\nbogus\nend\n").is_err());
        assert!(Checkpoint::decode("voltguard-checkpoint 1\nscalar x 12\nend\n").is_err());
    }
}
