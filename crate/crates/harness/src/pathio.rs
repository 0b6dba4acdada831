//! Path CSV: `# key=value` header lines, then `t,x` rows.

use std::io::{BufRead, Write};

use anyhow::{anyhow, bail, Context};
use perphase_core::simulate::Scheme;
use perphase_core::{DiffusionModel, PathGrid};

const MODEL_KEYS: [&str; 7] = ["T", "a", "theta", "lambda", "lambda_star", "b", "sigma"];

pub fn write_path<W: Write>(path: &PathGrid, mut w: W) -> std::io::Result<()> {
    let m = &path.model;
    let s = &m.signal;
    writeln!(w, "# T={:?}", s.period)?;
    writeln!(w, "# a={:?}", s.duration)?;
    writeln!(w, "# theta={:?}", s.theta)?;
    writeln!(w, "# lambda={}", s.lambda)?;
    writeln!(w, "# lambda_star={}", s.lambda_star)?;
    writeln!(w, "# b={}", m.drift)?;
    writeln!(w, "# sigma={}", m.sigma)?;
    writeln!(w, "# dt={:?}", path.dt)?;
    writeln!(w, "# steps_per_period={}", path.steps_per_period)?;
    writeln!(w, "# start_index={}", path.start_index)?;
    writeln!(w, "# seed={}", path.seed)?;
    writeln!(w, "# scheme={}", path.scheme.name())?;
    writeln!(w, "t,x")?;
    for (i, x) in path.values.iter().enumerate() {
        writeln!(w, "{:.16e},{:.16e}", path.time(i), x)?;
    }
    w.flush()
}

pub fn read_path<R: BufRead>(r: R) -> anyhow::Result<PathGrid> {
    let mut header: Vec<(String, String)> = Vec::new();
    let mut values = Vec::new();
    let mut seen_columns = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `# key=value`", lineno + 1))?;
            header.push((k.trim().to_string(), v.trim().to_string()));
            continue;
        }
        if !seen_columns {
            if line != "t,x" {
                bail!("line {}: expected column header `t,x`", lineno + 1);
            }
            seen_columns = true;
            continue;
        }
        let (_, x) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("line {}: expected `t,x`", lineno + 1))?;
        let x: f64 = x
            .trim()
            .parse()
            .with_context(|| format!("line {}: bad value", lineno + 1))?;
        values.push(x);
    }
    let get = |key: &str| -> anyhow::Result<&str> {
        header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| anyhow!("missing header key `{key}`"))
    };
    let pairs = MODEL_KEYS
        .iter()
        .map(|&k| get(k).map(|v| (k, v)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let model = DiffusionModel::from_pairs(pairs)?;
    let dt: f64 = get("dt")?.parse().context("header `dt`")?;
    let steps_per_period: usize = get("steps_per_period")?
        .parse()
        .context("header `steps_per_period`")?;
    if (dt * steps_per_period as f64 - model.period()).abs() > 1e-12 * model.period() {
        bail!("dt·steps_per_period does not match the period T");
    }
    let scheme = match get("scheme")? {
        "euler" => Scheme::Euler,
        other => bail!("unknown scheme `{other}`"),
    };
    if values.is_empty() {
        bail!("path has no samples");
    }
    Ok(PathGrid {
        start_index: get("start_index")?
            .parse()
            .context("header `start_index`")?,
        dt,
        steps_per_period,
        values,
        model,
        seed: get("seed")?.parse().context("header `seed`")?,
        scheme,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use perphase_core::simulate::simulate_path;
    use perphase_core::{CoefFn, PeriodicFn, SignalSpec};

    #[test]
    fn round_trip_is_exact() {
        let sig = SignalSpec::new(
            PeriodicFn::sinusoid(1.0, 0.5, 0.3, 2.0).unwrap(),
            PeriodicFn::constant(2.0, 2.0).unwrap(),
            2.0,
            0.5,
            0.7,
        )
        .unwrap();
        let m = DiffusionModel::new(
            sig,
            CoefFn::Affine {
                beta: 0.1,
                gamma: 1.0,
            },
            CoefFn::BoundedRational { s0: 0.5, s1: 1.0 },
        )
        .unwrap();
        let p = simulate_path(&m, 0.3, 3, 40, 9).unwrap();
        let mut buf = Vec::new();
        write_path(&p, &mut buf).unwrap();
        let q = read_path(buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn missing_key_is_reported() {
        let err = read_path("# T=1.0\nt,x\n0,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");
    }
}
