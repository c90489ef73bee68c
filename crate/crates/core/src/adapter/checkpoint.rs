//! Adapter checkpoints: a `key=value` text header terminated by a line
//! `end`, followed by every parameter as a `T4F8` block in declaration order
//! (down, mid, dwconv, branches t/h/w, up, beta).

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AdapterConfig, AdapterParams, Variant};
use crate::error::{Error, Result};
use crate::gradcheck::Parameterized;
use crate::tensor::io::{read_param, write_param};

const HEADER: &str = "dsta-adapter-checkpoint v1";

fn invalid(msg: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into())
}

pub fn write_checkpoint<W: Write>(out: &mut W, cfg: &AdapterConfig, params: &AdapterParams) -> std::io::Result<()> {
    let mut names = Vec::new();
    params.for_each_param(&mut |n, _| names.push(n.to_owned()));
    writeln!(out, "{HEADER}")?;
    writeln!(out, "channels={}", cfg.channels)?;
    writeln!(out, "bottleneck={}", cfg.bottleneck)?;
    writeln!(out, "alpha={}", cfg.alpha)?;
    writeln!(out, "kernel={}", cfg.kernel)?;
    writeln!(out, "groups={}", cfg.groups)?;
    writeln!(out, "beta_init={}", cfg.beta_init)?;
    writeln!(out, "variant={}", cfg.variant)?;
    writeln!(out, "params={}", names.join(","))?;
    writeln!(out, "end")?;
    let mut result = Ok(());
    params.for_each_param(&mut |_, p| {
        if result.is_ok() {
            result = write_param(out, p);
        }
    });
    result
}

pub fn read_checkpoint<R: Read>(input: R) -> std::io::Result<(AdapterConfig, AdapterParams)> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != HEADER {
        return Err(invalid(format!("not an adapter checkpoint: {:?}", line.trim_end())));
    }
    let mut fields = std::collections::BTreeMap::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(invalid("checkpoint header is not terminated"));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| invalid(format!("malformed header line {l:?}")))?;
        fields.insert(k.to_owned(), v.to_owned());
    }
    fn get<T: std::str::FromStr>(
        f: &std::collections::BTreeMap<String, String>,
        key: &str,
    ) -> std::io::Result<T> {
        f.get(key)
            .ok_or_else(|| invalid(format!("missing header field {key}")))?
            .parse()
            .map_err(|_| invalid(format!("bad value for header field {key}")))
    }
    let cfg = AdapterConfig {
        channels: get(&fields, "channels")?,
        bottleneck: get(&fields, "bottleneck")?,
        alpha: get(&fields, "alpha")?,
        kernel: get(&fields, "kernel")?,
        groups: get(&fields, "groups")?,
        beta_init: get(&fields, "beta_init")?,
        variant: fields
            .get("variant")
            .ok_or_else(|| invalid("missing header field variant"))?
            .parse::<Variant>()
            .map_err(|e| invalid(e.to_string()))?,
    };
    let mut params = AdapterParams::zeros(&cfg).map_err(|e| invalid(e.to_string()))?;
    let mut expected_names = Vec::new();
    params.for_each_param(&mut |n, _| expected_names.push(n.to_owned()));
    if fields.get("params").map(String::as_str) != Some(expected_names.join(",").as_str()) {
        return Err(invalid("parameter list does not match the declared variant"));
    }
    let mut result = Ok(());
    params.for_each_param_mut(&mut |_, p| {
        if result.is_ok() {
            match read_param(&mut reader, p.shape()) {
                Ok(loaded) => *p = loaded,
                Err(e) => result = Err(e),
            }
        }
    });
    result?;
    Ok((cfg, params))
}

pub fn save_checkpoint(path: &Path, cfg: &AdapterConfig, params: &AdapterParams) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, cfg, params).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(AdapterConfig, AdapterParams)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(f).map_err(|e| match e.kind() {
        std::io::ErrorKind::InvalidData | std::io::ErrorKind::UnexpectedEof => Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
        _ => Error::io(path, e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_every_variant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for v in Variant::ALL {
            let cfg = AdapterConfig::new(6, 4, v).with_alpha(0.3).with_beta(0.25);
            let params = AdapterParams::init(&cfg, &mut rng).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &cfg, &params).unwrap();
            let (cfg2, params2) = read_checkpoint(&buf[..]).unwrap();
            assert_eq!(cfg, cfg2);
            assert_eq!(params, params2);
        }
    }

    #[test]
    fn rejects_truncated_body() {
        let cfg = AdapterConfig::new(4, 2, Variant::ConvT);
        let params = AdapterParams::zeros(&cfg).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &params).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
