//! Plain-text parameter checkpoints.
//!
//! One record per parameter: a header line `param <name> <d0xd1x...>`
//! followed by one line of values printed with 17 significant digits,
//! which round-trips every finite f64 bit-identically.

use std::fs;
use std::path::Path;

use crate::error::{AutodiffError, Result};
use crate::param::Parameter;

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn save(path: &Path, params: &[Parameter]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("checkpoint v1 {}\n", params.len()));
    for p in params {
        let dims: Vec<String> = p.shape().iter().map(|d| d.to_string()).collect();
        out.push_str(&format!("param {} {}\n", p.name(), dims.join("x")));
        let vals: Vec<String> = p.value().iter().map(|&v| format_f64(v)).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Raw records as written: (name, shape, values).
pub fn load(path: &Path) -> Result<Vec<(String, Vec<usize>, Vec<f64>)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(AutodiffError::Checkpoint {
        line: 1,
        msg: "empty file".into(),
    })?;
    let count: usize = header
        .strip_prefix("checkpoint v1 ")
        .and_then(|s| s.parse().ok())
        .ok_or(AutodiffError::Checkpoint {
            line: 1,
            msg: format!("bad header: {header}"),
        })?;
    let mut records = Vec::with_capacity(count);
    loop {
        let (lno, head) = match lines.next() {
            Some(v) => v,
            None => break,
        };
        if head.trim().is_empty() {
            continue;
        }
        let mut it = head.split_whitespace();
        if it.next() != Some("param") {
            return Err(AutodiffError::Checkpoint {
                line: lno + 1,
                msg: format!("expected 'param', got: {head}"),
            });
        }
        let name = it
            .next()
            .ok_or(AutodiffError::Checkpoint {
                line: lno + 1,
                msg: "missing name".into(),
            })?
            .to_string();
        let dims_str = it.next().ok_or(AutodiffError::Checkpoint {
            line: lno + 1,
            msg: "missing shape".into(),
        })?;
        let shape: Vec<usize> = dims_str
            .split('x')
            .map(|d| {
                d.parse().map_err(|_| AutodiffError::Checkpoint {
                    line: lno + 1,
                    msg: format!("bad dimension '{d}'"),
                })
            })
            .collect::<Result<_>>()?;
        let (vno, vline) = lines.next().ok_or(AutodiffError::Checkpoint {
            line: lno + 2,
            msg: format!("missing values for '{name}'"),
        })?;
        let values: Vec<f64> = vline
            .split_whitespace()
            .map(|v| {
                v.parse().map_err(|_| AutodiffError::Checkpoint {
                    line: vno + 1,
                    msg: format!("bad value '{v}'"),
                })
            })
            .collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(AutodiffError::Checkpoint {
                line: vno + 1,
                msg: format!("'{name}' expects {n} values, got {}", values.len()),
            });
        }
        records.push((name, shape, values));
    }
    if records.len() != count {
        return Err(AutodiffError::Checkpoint {
            line: 1,
            msg: format!("header says {count} params, found {}", records.len()),
        });
    }
    Ok(records)
}

/// Restore values into existing parameters, matched by name.
pub fn restore(path: &Path, params: &[Parameter]) -> Result<()> {
    let records = load(path)?;
    for p in params {
        let name = p.name();
        let rec = records
            .iter()
            .find(|(n, _, _)| *n == name)
            .ok_or(AutodiffError::Checkpoint {
                line: 0,
                msg: format!("parameter '{name}' not found in checkpoint"),
            })?;
        if rec.1 != p.shape() {
            return Err(AutodiffError::Checkpoint {
                line: 0,
                msg: format!("shape mismatch for '{name}': {:?} vs {:?}", rec.1, p.shape()),
            });
        }
        p.set_value(&rec.2);
    }
    Ok(())
}
