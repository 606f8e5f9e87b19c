//! CSV dumps of solved surfaces and policies.
//!
//! Each file starts with `#` comment lines. One of them is
//! `# meta {json}` holding the grid, market parameters and mark model, so a
//! policy can be reloaded on its own. Values are written in shortest
//! round-trip form and read back bit for bit.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::market::MarketParams;
use crate::marks::MarkModel;

use super::grid::Grid;
use super::surface::{Policy, ValueSurface};

const SURFACE_FORMAT: &str = "sigexec-surface";
const POLICY_FORMAT: &str = "sigexec-policy";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format: String,
    version: u32,
    grid: Grid,
    params: MarketParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    marks: Option<MarkModel>,
}

fn fmt_err(e: impl std::fmt::Display) -> ModelError {
    ModelError::PolicyFormat(e.to_string())
}

fn write_header<W: Write>(out: &mut W, extra: &[String], meta: &Meta, columns: &str) -> Result<()> {
    for line in extra {
        writeln!(out, "# {line}").map_err(fmt_err)?;
    }
    let json = serde_json::to_string(meta).map_err(fmt_err)?;
    writeln!(out, "# meta {json}").map_err(fmt_err)?;
    writeln!(out, "{columns}").map_err(fmt_err)
}

fn read_parts<R: BufRead>(input: R, format: &str) -> Result<(Meta, csv::Reader<std::io::Cursor<String>>)> {
    let mut meta = None;
    let mut body = String::new();
    for line in input.lines() {
        let line = line.map_err(fmt_err)?;
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(json) = comment.trim_start().strip_prefix("meta ") {
                meta = Some(serde_json::from_str::<Meta>(json).map_err(fmt_err)?);
            }
            continue;
        }
        body.push_str(&line);
        body.push('\n');
    }
    let meta = meta.ok_or_else(|| fmt_err("missing `# meta` line"))?;
    if meta.format != format || meta.version != VERSION {
        return Err(fmt_err(format!(
            "expected {format} v{VERSION}, found {} v{}",
            meta.format, meta.version
        )));
    }
    Ok((meta, csv::Reader::from_reader(std::io::Cursor::new(body))))
}

fn check_index(grid: &Grid, n: usize, t: usize, j: usize, i: usize) -> Result<()> {
    let expect = (n / grid.slice_len(), (n % grid.slice_len()) / grid.n_q, n % grid.n_q);
    if (t, j, i) != expect {
        return Err(fmt_err(format!("row {n}: key ({t}, {j}, {i}), expected {expect:?}")));
    }
    Ok(())
}

pub fn write_surface<W: Write>(out: &mut W, surface: &ValueSurface, extra: &[String]) -> Result<()> {
    let meta = Meta {
        format: SURFACE_FORMAT.into(),
        version: VERSION,
        grid: surface.grid,
        params: surface.params,
        marks: Some(surface.marks.clone()),
    };
    write_header(out, extra, &meta, "t_index,lambda_index,q_index,w")?;
    let g = &surface.grid;
    for (n, w) in surface.values.iter().enumerate() {
        let (t, j, i) = (n / g.slice_len(), (n % g.slice_len()) / g.n_q, n % g.n_q);
        writeln!(out, "{t},{j},{i},{w}").map_err(fmt_err)?;
    }
    Ok(())
}

pub fn read_surface<R: BufRead>(input: R) -> Result<ValueSurface> {
    let (meta, mut rows) = read_parts(input, SURFACE_FORMAT)?;
    let grid = meta.grid;
    let mut values = Vec::with_capacity((grid.n_t + 1) * grid.slice_len());
    for (n, row) in rows.deserialize::<(usize, usize, usize, f64)>().enumerate() {
        let (t, j, i, w) = row.map_err(fmt_err)?;
        check_index(&grid, n, t, j, i)?;
        values.push(w);
    }
    if values.len() != (grid.n_t + 1) * grid.slice_len() {
        return Err(fmt_err(format!("{} values for a grid of {}", values.len(), (grid.n_t + 1) * grid.slice_len())));
    }
    Ok(ValueSurface {
        grid,
        params: meta.params,
        marks: meta.marks.ok_or_else(|| fmt_err("surface without mark model"))?,
        values,
    })
}

pub fn write_policy<W: Write>(out: &mut W, policy: &Policy, extra: &[String]) -> Result<()> {
    let meta = Meta {
        format: POLICY_FORMAT.into(),
        version: VERSION,
        grid: policy.grid,
        params: policy.params,
        marks: None,
    };
    write_header(out, extra, &meta, "t_index,lambda_index,q_index,gamma_minus,gamma_plus,delta")?;
    let g = &policy.grid;
    for (n, (gm, d)) in policy.gamma.iter().zip(&policy.delta).enumerate() {
        let (t, j, i) = (n / g.slice_len(), (n % g.slice_len()) / g.n_q, n % g.n_q);
        writeln!(out, "{t},{j},{i},{},{},{d}", gm[0], gm[1]).map_err(fmt_err)?;
    }
    Ok(())
}

pub fn read_policy<R: BufRead>(input: R) -> Result<Policy> {
    let (meta, mut rows) = read_parts(input, POLICY_FORMAT)?;
    let grid = meta.grid;
    let mut gamma = Vec::new();
    let mut delta = Vec::new();
    for (n, row) in rows.deserialize::<(usize, usize, usize, i16, i16, i16)>().enumerate() {
        let (t, j, i, gm, gp, d) = row.map_err(fmt_err)?;
        check_index(&grid, n, t, j, i)?;
        gamma.push([gm, gp]);
        delta.push(d);
    }
    if delta.len() != (grid.n_t + 1) * grid.slice_len() {
        return Err(fmt_err("policy table is incomplete"));
    }
    Ok(Policy {
        grid,
        params: meta.params,
        gamma,
        delta,
    })
}
